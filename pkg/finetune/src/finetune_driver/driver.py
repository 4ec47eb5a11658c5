"""Fine-tuning loop: corpus in, checkpoint plus prediction CSVs out.

Per epoch the validation PR-AUC (average precision, score descending
with example-id tie-break, matching the evaluation contract) selects
the best checkpoint; the retained model scores val and test, writing
``<model>__<task>__run<k>.csv`` files with a positive-class probability
per example.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import torch
import torch.nn.functional as F

from .data import CorpusExample, load_corpus
from .errors import DriverError, OutOfMemoryError
from .model import ModelSpec, TinyCausalClassifier
from .tokenizer import WordTokenizer, extend_tokenizer


@dataclass
class FinetuneConfig:
    base_vocab: Path
    corpus_dir: Path
    out_dir: Path
    model: str = "tiny-local"
    task: str = "diagnosis"          # diagnosis | readmission
    task_tag: str = "task"           # goes into the prediction file name
    learning_rate: float = 2e-5
    lora_rank: int = 8
    lora_alpha: float = 32.0
    lora_dropout: float = 0.1
    bias: str = "none"
    epochs: Optional[int] = None     # default: 6 diagnosis, 4 readmission
    quantize_4bit: bool = False
    max_seq_len: int = 128
    batch_size: int = 8
    added_tokens: Optional[Path] = None
    seed: int = 7
    run: int = 1
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2

    def resolved_epochs(self) -> int:
        if self.epochs is not None:
            return self.epochs
        return 4 if self.task == "readmission" else 6

    def validate(self) -> None:
        if self.resolved_epochs() <= 0:
            raise DriverError("epochs must be positive")
        if self.learning_rate <= 0:
            raise DriverError("learning_rate must be positive")
        if self.max_seq_len < 1 or self.max_seq_len > 4096:
            raise DriverError("max_seq_len must be within the model limit (1..4096)")
        if self.bias != "none":
            raise DriverError("only bias mode 'none' is supported")
        if self.task not in ("diagnosis", "readmission"):
            raise DriverError(f"unknown task {self.task!r}")

    def model_label(self) -> str:
        suffix = "-tok" if self.added_tokens else "-notok"
        return self.model.replace("/", "-").replace("__", "-") + suffix


def average_precision(scores: List[float], labels: List[int], ids: List[str]) -> float:
    """AP with the evaluation contract's deterministic tie-break."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], ids[i]))
    n_pos = sum(labels)
    if n_pos == 0:
        return float("nan")
    cum = 0
    total = 0.0
    for k, i in enumerate(order, start=1):
        if labels[i] == 1:
            cum += 1
            total += cum / k
    return total / n_pos


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_pr_auc: float


@dataclass
class FinetuneResult:
    model_label: str
    best_epoch: int
    best_val_pr_auc: float
    epochs: List[EpochRecord]
    prediction_files: Dict[str, Path]
    checkpoint: Path
    tokenizer_fingerprint: str
    n_trainable: int
    n_total: int


def _batches(n: int, batch_size: int, rng: random.Random, shuffle: bool):
    idx = list(range(n))
    if shuffle:
        rng.shuffle(idx)
    for i in range(0, n, batch_size):
        yield idx[i : i + batch_size]


def _encode_batch(examples: List[CorpusExample], tokenizer: WordTokenizer, max_len: int):
    encoded = [tokenizer.encode(ex.text, max_len) for ex in examples]
    width = max(len(e) for e in encoded)
    ids = torch.full((len(encoded), width), tokenizer.pad_id, dtype=torch.long)
    for i, row in enumerate(encoded):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    pad_mask = ids == tokenizer.pad_id
    labels = torch.tensor([ex.label for ex in examples], dtype=torch.long)
    return ids, pad_mask, labels


@torch.no_grad()
def _score_split(model, examples, tokenizer, max_len, batch_size) -> List[float]:
    model.eval()
    scores: List[float] = []
    for i in range(0, len(examples), batch_size):
        chunk = examples[i : i + batch_size]
        ids, pad_mask, _ = _encode_batch(chunk, tokenizer, max_len)
        probs = torch.softmax(model(ids, pad_mask), dim=-1)[:, 1]
        scores.extend(float(p) for p in probs)
    return scores


def _write_predictions(path: Path, examples, scores) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("example_id,score,label\n")
        for ex, score in zip(examples, scores):
            fh.write(f"{ex.example_id},{score!r},{ex.label}\n")


def fine_tune(cfg: FinetuneConfig) -> FinetuneResult:
    cfg.validate()
    corpus = load_corpus(cfg.corpus_dir)
    tokenizer = WordTokenizer.from_vocab_file(cfg.base_vocab)
    if cfg.added_tokens is not None:
        tokenizer = extend_tokenizer(tokenizer, cfg.added_tokens)

    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    spec = ModelSpec(
        d_model=cfg.d_model, n_heads=cfg.n_heads, n_layers=cfg.n_layers,
        max_seq_len=cfg.max_seq_len, lora_rank=cfg.lora_rank,
        lora_alpha=cfg.lora_alpha, lora_dropout=cfg.lora_dropout,
        quantize_4bit=cfg.quantize_4bit,
    )
    model = TinyCausalClassifier(tokenizer.n_base, len(tokenizer) - tokenizer.n_base, spec)
    optimizer = torch.optim.AdamW(model.trainable_parameters(), lr=cfg.learning_rate)

    train = corpus["train"]
    records: List[EpochRecord] = []
    best_state = None
    best_ap = float("-inf")
    best_epoch = -1
    try:
        for epoch in range(1, cfg.resolved_epochs() + 1):
            model.train()
            total_loss = 0.0
            n_correct = 0
            for batch_idx in _batches(len(train), cfg.batch_size, rng, shuffle=True):
                batch = [train[i] for i in batch_idx]
                ids, pad_mask, labels = _encode_batch(batch, tokenizer, cfg.max_seq_len)
                logits = model(ids, pad_mask)
                loss = F.cross_entropy(logits, labels)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total_loss += float(loss.detach()) * len(batch)
                n_correct += int((logits.argmax(dim=-1) == labels).sum())

            val = corpus["val"]
            val_scores = _score_split(model, val, tokenizer, cfg.max_seq_len, cfg.batch_size)
            val_ap = average_precision(
                val_scores, [ex.label for ex in val], [ex.example_id for ex in val]
            )
            records.append(EpochRecord(
                epoch=epoch,
                train_loss=total_loss / len(train),
                train_accuracy=n_correct / len(train),
                val_pr_auc=val_ap,
            ))
            if val_ap > best_ap:
                best_ap = val_ap
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
    except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
        raise OutOfMemoryError(
            f"allocator failure during training ({exc}); shrink batch_size "
            f"(currently {cfg.batch_size}) or max_seq_len"
        ) from exc

    if best_state is not None:
        model.load_state_dict(best_state)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    label = cfg.model_label()
    prediction_files: Dict[str, Path] = {}
    for split in ("val", "test"):
        examples = corpus[split]
        scores = _score_split(model, examples, tokenizer, cfg.max_seq_len, cfg.batch_size)
        path = out_dir / split / f"{label}__{cfg.task_tag}__run{cfg.run}.csv"
        _write_predictions(path, examples, scores)
        prediction_files[split] = path

    checkpoint = out_dir / f"{label}__run{cfg.run}.pt"
    torch.save({
        "state_dict": model.state_dict(),
        "tokenizer_tokens": tokenizer.tokens,
        "n_base_vocab": tokenizer.n_base,
        "spec": spec.__dict__,
        "best_epoch": best_epoch,
        "best_val_pr_auc": best_ap,
    }, checkpoint)
    (out_dir / f"{label}__run{cfg.run}.history.json").write_text(
        json.dumps([r.__dict__ for r in records], indent=2) + "\n", encoding="utf-8"
    )

    return FinetuneResult(
        model_label=label,
        best_epoch=best_epoch,
        best_val_pr_auc=best_ap,
        epochs=records,
        prediction_files=prediction_files,
        checkpoint=checkpoint,
        tokenizer_fingerprint=tokenizer.fingerprint(),
        n_trainable=model.n_trainable(),
        n_total=model.n_total(),
    )
