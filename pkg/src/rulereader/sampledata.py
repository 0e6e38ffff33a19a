"""A small self-consistent benefit-rules corpus.

The real knowledge base and dialog data are external downloads; this
module builds a miniature stand-in with the same shape so that demos,
smoke evaluations, and the desk-scale training checks run out of the box.

Each rule lists its clarification questions in order.  Dialog samples are
generated as consistent trajectories: a history of all-yes answers over
the first k conditions yields "inquire" on condition k+1 (or "yes" once
every condition is resolved), and a trailing "no" answer yields "no".
"""

from __future__ import annotations

from pathlib import Path

from rulereader.corpus import (
    Decision,
    DialogSample,
    HistoryTurn,
    KnowledgeBase,
    RuleText,
    compute_seen_tags,
    save_normalized,
)
from rulereader.textutil import normalize_text

_RULES: list[dict] = [
    {
        "rule_id": "grove-loan",
        "source": "city.example/grove-works",
        "text": (
            "Grove Works loans go to companies - not to private owners - so "
            "eligibility depends on the company itself. Every company applying "
            "under the Grove Works program must: operate for profit, meet the "
            "posted size limits, lack internal funds to cover the project, and "
            "show it can repay the loan on time."
        ),
        "conditions": [
            "Do you operate for profit?",
            "Do you meet the posted size limits?",
            "Do you lack internal funds to cover the project?",
            "Can you repay the loan on time?",
        ],
        "questions": [
            "Can my company get a Grove Works loan?",
            "Is the Grove Works loan program open to my company?",
        ],
        "scenarios": [
            "I manage a machine shop with nine employees on the east side.",
            "Our family company builds storage sheds and wants to expand.",
            "I co-own a printing company downtown.",
        ],
    },
    {
        "rule_id": "harbor-finance",
        "source": "coast.example/harbor-vessels",
        "text": (
            "The Harbor Vessel Finance Program is a direct government loan that "
            "funds long term construction and refitting of fishing boats, "
            "dockside facilities, and aquaculture equipment in the coastal "
            "region. It serves operators that are not able to obtain credit "
            "elsewhere; every applicant must hold a current commercial "
            "license."
        ),
        "conditions": [
            "Are you unable to obtain credit elsewhere?",
            "Do you hold a current commercial license?",
        ],
        "questions": [
            "Can I finance my boat refit through the Harbor Vessel Finance Program?",
            "Does the Harbor Vessel Finance Program cover my dockside project?",
        ],
        "scenarios": [
            "I run two crab boats out of the north marina.",
            "My cousin and I are rebuilding a dock for our oyster farm.",
            "I fish commercially in the coastal region.",
        ],
    },
    {
        "rule_id": "heat-rebate",
        "source": "energy.example/heat-rebate",
        "text": (
            "You will need a record of the energy payments you have made during "
            "the year to claim the winter heating rebate - unless you are "
            "applying for the Cold Month Allowance instead."
        ),
        "conditions": [
            "Do you have a record of the energy payments you have made?",
            "Are you applying for the Cold Month Allowance instead?",
        ],
        "questions": [
            "Can I claim the winter heating rebate?",
            "Am I able to get the winter heating rebate this year?",
        ],
        "scenarios": [
            "I rent a flat and pay the gas bill myself.",
            "My house uses an oil furnace and the bills are in my name.",
            "I moved here in October and heat with electricity.",
        ],
    },
    {
        "rule_id": "deposit-cap",
        "source": "housing.example/deposit-rules",
        "text": (
            "If a tenant has paid a deposit above the legal cap, the landlord "
            "must return the excess within 30 days unless both parties signed a "
            "different repayment schedule."
        ),
        "conditions": [
            "Did you pay a deposit above the legal cap?",
            "Did both parties sign a different repayment schedule?",
        ],
        "questions": [
            "Does my landlord have to return part of my deposit?",
            "Can I get the extra deposit money back from my landlord?",
        ],
        "scenarios": [
            "I moved into a two-bedroom flat in March.",
            "My landlord asked for six weeks of rent up front.",
            "I signed a one-year lease last autumn.",
        ],
    },
    {
        "rule_id": "orchard-storage",
        "source": "farm.example/orchard-storage",
        "text": (
            "Orchard Storage Loans encourage growers to build on-farm storage "
            "for eligible crops. Eligible crops include: apples, pears, "
            "cherries, dried beans, and seed grain. The grower must control the "
            "storage site for the full loan term."
        ),
        "conditions": [
            "Do you grow one of the eligible crops?",
            "Do you control the storage site for the full loan term?",
        ],
        "questions": [
            "Can I get an Orchard Storage Loan for a new barn?",
            "Would an Orchard Storage Loan cover my storage building?",
        ],
        "scenarios": [
            "I farm twelve acres of fruit trees outside town.",
            "We harvest beans and grain on the same fields every year.",
            "My orchard ships fruit to three county markets.",
        ],
    },
    {
        "rule_id": "campus-travel",
        "source": "transit.example/campus-card",
        "text": (
            "The Campus Travel Card gives discounted fares to students. To "
            "qualify you must: be enrolled at least half time, be under 26 "
            "years old, and live outside the city center."
        ),
        "conditions": [
            "Are you enrolled at least half time?",
            "Are you under 26 years old?",
            "Do you live outside the city center?",
        ],
        "questions": [
            "Can I get a Campus Travel Card?",
            "Am I eligible for the Campus Travel Card discount?",
        ],
        "scenarios": [
            "I study biology and commute forty minutes by bus.",
            "I take evening classes while working part time.",
            "I just transferred to the downtown campus.",
        ],
    },
    {
        "rule_id": "repair-grant",
        "source": "housing.example/repair-grant",
        "text": (
            "The Home Repair Grant covers urgent fixes for owners who occupy "
            "the home.\n"
            "You may apply if:\n"
            "- the home is your main residence\n"
            "- an inspector has listed the repair as urgent\n"
            "- your household income is below the county limit"
        ),
        "conditions": [
            "Is the home your main residence?",
            "Has an inspector listed the repair as urgent?",
            "Is your household income below the county limit?",
        ],
        "questions": [
            "Can I use the Home Repair Grant to fix my roof?",
            "Does the Home Repair Grant apply to my house?",
        ],
        "scenarios": [
            "Our chimney started leaking into the upstairs bedroom.",
            "The back wall of my house cracked after the storm.",
            "I own a small bungalow near the river.",
        ],
    },
    {
        "rule_id": "parental-leave",
        "source": "work.example/shared-leave",
        "text": (
            "Shared parental leave can start once the birth is registered. If "
            "the other parent has already used the full allowance, you cannot "
            "claim additional weeks unless a court order says otherwise."
        ),
        "conditions": [
            "Has the birth been registered?",
            "Has the other parent already used the full allowance?",
        ],
        "questions": [
            "Can I take shared parental leave this spring?",
            "Am I entitled to shared parental leave now?",
        ],
        "scenarios": [
            "Our daughter was born three weeks ago.",
            "I work full time and my partner is freelance.",
            "We are expecting our second child.",
        ],
    },
    {
        "rule_id": "import-permit",
        "source": "trade.example/plant-imports",
        "text": (
            "An import permit is required for plant products. The office issues "
            "a permit only when the shipment has a health certificate, and "
            "only if the sender is a registered exporter."
        ),
        "conditions": [
            "Does the shipment have a health certificate?",
            "Is the sender a registered exporter?",
        ],
        "questions": [
            "Can I get an import permit for my shipment of seedlings?",
            "Will the office issue an import permit for my plant shipment?",
        ],
        "scenarios": [
            "I am bringing in dried lavender from a farm abroad.",
            "A supplier wants to send me grafted apple stock.",
            "My nursery orders bulbs from overseas every winter.",
        ],
    },
    {
        "rule_id": "bridge-grant",
        "source": "city.example/bridge-grant",
        "text": (
            "The Bridge Grant backs young companies that cannot raise private "
            "funding. The firm must be registered in the state; it must aim to "
            "make a profit."
        ),
        "conditions": [
            "Is the firm registered in the state?",
            "Does the firm aim to make a profit?",
        ],
        "questions": [
            "Can my startup receive the Bridge Grant?",
            "Is the Bridge Grant available for my new firm?",
        ],
        "scenarios": [
            "Two of us founded a software firm last year.",
            "My bakery opened eight months ago.",
            "We are three founders working out of a garage.",
        ],
    },
    {
        "rule_id": "well-test",
        "source": "water.example/well-testing",
        "text": (
            "Rural well owners can request a free water test. The lab schedules "
            "a visit only when the well serves a year-round household, and "
            "only while the access road is open in winter."
        ),
        "conditions": [
            "Does the well serve a year-round household?",
            "Is the access road open in winter?",
        ],
        "questions": [
            "Can I get a free water test for my well?",
            "Will the lab test the water from my well at no charge?",
        ],
        "scenarios": [
            "Our farmhouse well has tasted odd since the flood.",
            "I bought a cabin with an old drilled well.",
            "The well behind my house serves the whole family.",
        ],
    },
    {
        "rule_id": "library-card",
        "source": "library.example/regional-card",
        "text": (
            "A regional library card is free for residents. Visitors can buy a "
            "yearly card unless their home library already belongs to the "
            "exchange network."
        ),
        "conditions": [
            "Are you a resident of the region?",
            "Does your home library already belong to the exchange network?",
        ],
        "questions": [
            "Can I get a regional library card for free?",
            "Do I qualify for the free regional library card?",
        ],
        "scenarios": [
            "I spend every summer at my sister's place here.",
            "I just moved to the valley for a new job.",
            "I visit the region one week a month for work.",
        ],
    },
]

# Never the gold rule for any sample; retrieval chaff.
_DISTRACTORS = [
    (
        "bike-parking",
        "transit.example/bike-parking",
        "Covered bicycle parking at the station is reserved for monthly pass "
        "holders. Daily riders may use the open racks by the ticket hall.",
    ),
    (
        "museum-pass",
        "culture.example/museum-pass",
        "The museum evening pass admits two adults after five on weekdays. "
        "School groups should book the morning program instead.",
    ),
]

# Train sees these rules; the rest appear only in dev/test (unseen).
_TRAIN_RULES = [
    "grove-loan", "harbor-finance", "heat-rebate", "deposit-cap",
    "orchard-storage", "campus-travel", "repair-grant", "parental-leave",
    "import-permit",
]
_DEV_UNSEEN = ["bridge-grant", "well-test"]
_TEST_UNSEEN = ["well-test", "library-card"]


def build_knowledge_base() -> KnowledgeBase:
    kb = KnowledgeBase()
    for spec in _RULES:
        kb.add_rule(
            RuleText(spec["rule_id"], spec["source"], normalize_text(spec["text"]))
        )
    for rule_id, source, text in _DISTRACTORS:
        kb.add_rule(RuleText(rule_id, source, normalize_text(text)))
    return kb


def _trajectory_samples(
    spec: dict, question: str, scenario: str, split: str, tag: str
) -> list[DialogSample]:
    conditions = spec["conditions"]
    samples = []

    def make(idx, history, decision, followup):
        return DialogSample(
            sample_id=f"{spec['rule_id']}-{tag}-{idx}",
            question=question,
            scenario=scenario,
            history=[HistoryTurn(q, a) for q, a in history],
            gold_rule_id=spec["rule_id"],
            gold_decision=decision,
            gold_followup=followup,
            split=split,
        )

    idx = 0
    for k in range(len(conditions) + 1):
        history = [(conditions[i], "yes") for i in range(k)]
        if k == len(conditions):
            samples.append(make(idx, history, Decision.YES, None))
        else:
            samples.append(make(idx, history, Decision.INQUIRE, conditions[k]))
        idx += 1
    for k in range(1, len(conditions) + 1):
        history = [(conditions[i], "yes") for i in range(k - 1)]
        history.append((conditions[k - 1], "no"))
        samples.append(make(idx, history, Decision.NO, None))
        idx += 1
    return samples


def build_sample_corpus() -> tuple[KnowledgeBase, list[DialogSample]]:
    """Knowledge base plus train/dev/test dialog samples with seen tags."""
    kb = build_knowledge_base()
    specs = {spec["rule_id"]: spec for spec in _RULES}
    samples: list[DialogSample] = []
    for rule_id in _TRAIN_RULES:
        spec = specs[rule_id]
        samples += _trajectory_samples(
            spec, spec["questions"][0], spec["scenarios"][0], "train", "tr0"
        )
        samples += _trajectory_samples(
            spec, spec["questions"][1], spec["scenarios"][1], "train", "tr1"
        )
    for rule_id in _TRAIN_RULES[:5] + _DEV_UNSEEN:
        spec = specs[rule_id]
        samples += _trajectory_samples(
            spec, spec["questions"][0], spec["scenarios"][2], "dev", "dv"
        )
    for rule_id in _TRAIN_RULES + _TEST_UNSEEN:
        spec = specs[rule_id]
        samples += _trajectory_samples(spec, spec["questions"][1], "", "test", "te")
    for sample in samples:
        sample.validate()
        kb.split_index.setdefault(sample.split, []).append(sample.sample_id)
    compute_seen_tags(samples)
    return kb, samples


def write_sample_dataset(directory: str | Path) -> Path:
    """Materialize the corpus as a normalized-jsonl file and return its path."""
    kb, samples = build_sample_corpus()
    return save_normalized(kb, samples, Path(directory) / "sample-dataset.jsonl")


def scripted_flow() -> dict:
    """A two-follow-up conversation with a known terminal answer, used by
    the dialog-engine checks and the chat demo.

    Uses a two-condition rule from the head of the train split so that
    models overfit on the first 64 training samples have seen every state
    of this trajectory.
    """
    spec = next(s for s in _RULES if s["rule_id"] == "harbor-finance")
    return {
        "question": spec["questions"][0],
        "scenario": spec["scenarios"][0],
        "answers": ["yes", "yes"],
        "final_decision": Decision.YES,
        "rule_id": spec["rule_id"],
    }
