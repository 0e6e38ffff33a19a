#!/usr/bin/env python3
"""Download the released open-retrieval dialog dataset.

Fetches the train/dev/test JSON files and the rule-text knowledge base
from the dataset's public repository into data/or-sharc/, the location the
full-corpus acceptance test looks for (override with
RULEREADER_ORSHARC_DIR).  Needs outbound network access and the
'requests' package (installed with the 'full' extra).

The loader accepts either a knowledge-base file (documents.json /
snippets.json) plus per-split sample files, or per-split files with the
rule text embedded on each sample; adjust FILES below if the release
layout differs.
"""

import sys
from pathlib import Path

BASE = (
    "https://raw.githubusercontent.com/Yifan-Gao/"
    "open_retrieval_conversational_machine_reading/main/data"
)
FILES = [
    ("sharc_raw/json/sharc_open_train.json", "train.json"),
    ("sharc_raw/json/sharc_open_dev.json", "dev.json"),
    ("sharc_raw/json/sharc_open_test.json", "test.json"),
    ("sharc_raw/json/sharc_open_id2snippet.json", "documents.json"),
]


def main(out_dir: str = "data/or-sharc") -> int:
    try:
        import requests
    except ImportError:
        print("pip install requests (or the 'full' extra) first", file=sys.stderr)
        return 1
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for remote, local in FILES:
        url = f"{BASE}/{remote}"
        target = out / local
        if target.exists():
            print(f"kept existing {target}")
            continue
        print(f"fetching {url}")
        response = requests.get(url, timeout=120)
        if response.status_code != 200:
            print(
                f"  HTTP {response.status_code}; check the repository layout "
                "and adjust FILES",
                file=sys.stderr,
            )
            return 1
        target.write_bytes(response.content)
        print(f"  wrote {target} ({len(response.content)} bytes)")
    print(f"done; point RULEREADER_ORSHARC_DIR at {out} if it is not the default")
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
