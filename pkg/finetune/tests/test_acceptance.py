"""Secondary acceptance: drive the primary pipeline's CLI end to end,
fine-tune on its emitted corpus, and feed predictions back through its
eval/report commands.

The primary is consumed strictly through external interfaces: the
``ehrpipe`` CLI and the corpus / vocabulary / prediction file contracts.
"""

import json
import subprocess
import sys

import pytest

from finetune_driver.driver import FinetuneConfig, fine_tune


def ehrpipe(*args):
    proc = subprocess.run([sys.executable, "-m", "ehrpipe.cli", *args],
                          capture_output=True, text=True)
    return proc


@pytest.fixture(scope="module")
def pipeline_outputs(tmp_path_factory):
    """synth -> cohort -> corpus (+vocab extension) through the primary CLI."""
    root = tmp_path_factory.mktemp("pipeline")
    data, run = root / "data", root / "run"
    assert ehrpipe("synth", "--out", str(data), "--n", "400", "--effect", "2.0",
                   "--seed", "7").returncode == 0
    cfg = root / "pipeline.ini"
    cfg.write_text(f"""
[dataset]
kind = mimic-like

[paths]
tables_dir = {data}/mimic
descriptions = {data}/descriptions.csv
base_vocab = {data}/base_vocab.txt
out_dir = {run}

[maps]
diagnosis_icd10 = {data}/maps/icd10cm_to_ccsdx.csv

[task]
kind = next-visit
target_ccs = 157

[runtime]
seed = 7

[finetune]
model = tiny-local
base_vocab = {data}/base_vocab.txt
corpus_dir = {run}
out_dir = {run}/ft
added_tokens = {run}/added_tokens.txt
task = diagnosis
task_tag = next-visit-157
epochs = 10
learning_rate = 5e-3
batch_size = 16
seed = 7
""")
    assert ehrpipe("cohort", "--config", str(cfg)).returncode == 0
    assert ehrpipe("corpus", "--config", str(cfg), "--vocab-ext").returncode == 0
    return cfg, data, run


def driver_config(data, run_dir, **kw):
    defaults = dict(
        base_vocab=data / "base_vocab.txt",
        corpus_dir=run_dir,
        out_dir=run_dir / "ft",
        task_tag="next-visit-157",
        epochs=10,
        learning_rate=5e-3,
        batch_size=16,
        added_tokens=run_dir / "added_tokens.txt",
        seed=7,
    )
    defaults.update(kw)
    return FinetuneConfig(**defaults)


def test_planted_corpus_three_runs_eval_clean(pipeline_outputs):
    cfg_path, data, run = pipeline_outputs
    test_files = []
    for k in (1, 2, 3):
        result = fine_tune(driver_config(data, run, run=k, seed=7 + k))
        test_files.append(str(result.prediction_files["test"]))

    proc = ehrpipe("eval", *test_files, "--out", str(run / "eval"))
    assert proc.returncode == 0, proc.stderr
    assert proc.stderr.strip() == "", f"eval produced warnings: {proc.stderr!r}"
    assert "±" in proc.stdout

    # PR-AUC above the test split's prevalence
    labels = [json.loads(l)["label"] for l in (run / "test.jsonl").read_text().splitlines()]
    prevalence = sum(labels) / len(labels)
    runs_csv = (run / "eval" / "runs.csv").read_text().splitlines()[1:]
    pr_values = [float(line.split(",")[3]) for line in runs_csv]
    mean_ap = sum(pr_values) / len(pr_values)
    assert mean_ap > prevalence, f"mean AP {mean_ap:.3f} vs prevalence {prevalence:.3f}"


def test_ablation_arms_distinguishable_in_report(pipeline_outputs):
    cfg_path, data, run = pipeline_outputs
    out = run / "ablation"
    with_tokens = fine_tune(driver_config(data, run, epochs=4, out_dir=out))
    without = fine_tune(driver_config(data, run, epochs=4, out_dir=out, added_tokens=None))
    assert with_tokens.model_label != without.model_label
    # the '-' arm keeps the base tokenizer
    assert with_tokens.tokenizer_fingerprint != without.tokenizer_fingerprint

    proc = ehrpipe("report", "--pred-dir", str(out / "test"), "--out", str(out / "report"))
    assert proc.returncode == 0, proc.stderr
    report_text = (out / "report" / "report.txt").read_text()
    assert "tiny-local-tok" in report_text
    assert "tiny-local-notok" in report_text
    csv_rows = (out / "report" / "report.csv").read_text().splitlines()
    assert len(csv_rows) == 3  # header + both arms


def test_driver_cli_consumes_shared_config(pipeline_outputs, tmp_path):
    cfg_path, data, run = pipeline_outputs
    proc = subprocess.run(
        [sys.executable, "-m", "finetune_driver.cli", "--config", str(cfg_path),
         "--run", "9", "--seed", "99"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    pred = run / "ft" / "test" / "tiny-local-tok__next-visit-157__run9.csv"
    assert pred.is_file()
    # the emitted file passes the primary's loader (eval exits 0)
    assert ehrpipe("eval", str(pred), "--out", str(run / "ft" / "eval9")).returncode == 0
