import json
import random
from pathlib import Path

import pytest

SIGNAL_VOCAB = [
    "history", "predict", "whether", "next", "admission", "includes",
    "acute", "chronic", "renal", "cardiac", "failure", "infection",
    "disorder", "mild", "severe", "gastric", "hepatic", "vascular",
]


def write_jsonl(path: Path, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def make_signal_corpus(root: Path, n_train=64, n_val=24, n_test=24, seed=0):
    """Tiny corpus where positives carry 'severe renal failure'."""
    rng = random.Random(seed)
    (root / "base_vocab.txt").write_text("".join(w + "\n" for w in SIGNAL_VOCAB))

    def rows(n, offset):
        out = []
        for i in range(n):
            label = rng.randint(0, 1)
            words = [rng.choice(SIGNAL_VOCAB) for _ in range(rng.randint(8, 16))]
            if label:
                words.insert(rng.randint(0, len(words)), "severe renal failure")
            else:
                words.insert(0, "mild gastric")
            out.append({"example_id": f"e{offset + i:04d}",
                        "text": "history: " + " ".join(words), "label": label})
        return out

    write_jsonl(root / "train.jsonl", rows(n_train, 0))
    write_jsonl(root / "val.jsonl", rows(n_val, 1000))
    write_jsonl(root / "test.jsonl", rows(n_test, 2000))
    return root


@pytest.fixture
def signal_corpus(tmp_path):
    return make_signal_corpus(tmp_path)
