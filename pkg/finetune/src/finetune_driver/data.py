"""Prompt-corpus loading (train/val/test JSONL contract)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

from .errors import CorpusMissingError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class CorpusExample:
    example_id: str
    text: str
    label: int


def load_corpus(corpus_dir) -> Dict[str, List[CorpusExample]]:
    corpus_dir = Path(corpus_dir)
    corpus: Dict[str, List[CorpusExample]] = {}
    for split in SPLITS:
        path = corpus_dir / f"{split}.jsonl"
        if not path.is_file():
            raise CorpusMissingError(f"missing corpus file: {path}")
        examples: List[CorpusExample] = []
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    examples.append(CorpusExample(
                        example_id=str(obj["example_id"]),
                        text=str(obj["text"]),
                        label=int(obj["label"]),
                    ))
                except (KeyError, ValueError) as exc:
                    raise CorpusMissingError(f"{path}:{lineno}: bad record ({exc})") from None
        if not examples:
            raise CorpusMissingError(f"{path}: empty split")
        corpus[split] = examples
    return corpus
