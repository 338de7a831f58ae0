import json

import pytest

from docevents.cli import build_splits, main
from docevents.corpus import dump_canonical, load_canonical
from docevents.pipeline import (ArgGenConfig, RunConfig, TapKeyConfig,
                                run_pipeline)
from docevents.toy import (TOY_ONTOLOGY_YAML, build_toy_corpus,
                           write_wikievents_files)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    (tmp / "ont.yaml").write_text(TOY_ONTOLOGY_YAML)
    train = build_toy_corpus(12, seed=1,
                             shapes=["attack", "statement", "personnel"])
    test = build_toy_corpus(4, seed=2,
                            shapes=["attack", "statement", "personnel"])
    dump_canonical(train, tmp / "train.jsonl")
    dump_canonical(test, tmp / "test.jsonl")
    write_wikievents_files(train, tmp / "wiki_docs.jsonl",
                           tmp / "wiki_coref.jsonl")
    return tmp


def fast_config(workdir, out, **kw):
    cfg = RunConfig(
        ontology=str(workdir / "ont.yaml"),
        train_path=str(workdir / "train.jsonl"),
        test_path=str(workdir / "test.jsonl"),
        output_dir=str(out),
        seed=7,
        tapkey=TapKeyConfig(epochs=4, embed_dim=32),
        arggen=ArgGenConfig(epochs=6, d_model=32, dim_ff=64, nhead=2,
                            beam_width=2, max_output_len=32),
    )
    for k, v in kw.items():
        setattr(cfg, k, v)
    return cfg


def test_convert_and_stats(workdir, tmp_path, capsys):
    out = tmp_path / "canon.jsonl"
    rc = main(["convert", "--format", "wikievents",
               "--input", str(workdir / "wiki_docs.jsonl"),
               "--coref", str(workdir / "wiki_coref.jsonl"),
               "--output", str(out)])
    assert rc == 0
    docs = load_canonical(out)
    assert len(docs) == 12
    rc = main(["stats", "--input", str(out)])
    assert rc == 0
    printed = capsys.readouterr().out
    assert "informative view" in printed
    assert "same-sentence informative fraction" in printed


def test_build_splits_freq_and_listed():
    docs = build_toy_corpus(20, seed=3)
    full = build_splits(docs, "full")
    assert sum(len(d.event_mentions) for d in full) == \
        sum(len(d.event_mentions) for d in docs)

    top2 = build_splits(docs, "freq", top_n=2)
    kept_types = {e.event_type for d in top2 for e in d.event_mentions}
    assert len(kept_types) == 2
    from collections import Counter
    counts = Counter(e.event_type for d in docs for e in d.event_mentions)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    assert kept_types == set(ranked[:2])
    # documents are retained even when all their events are filtered
    assert len(top2) == len(docs)

    # the listed 8 ACE subtypes: none occur in the toy corpus
    assert sum(len(d.event_mentions)
               for d in build_splits(docs, "ontology_1per")) == 0
    with pytest.raises(ValueError):
        build_splits(docs, "nonsense")


def test_build_splits_command(workdir, tmp_path):
    out = tmp_path / "freq.jsonl"
    rc = main(["build-splits", "--input", str(workdir / "train.jsonl"),
               "--mode", "freq", "--top-n", "2", "--output", str(out)])
    assert rc == 0
    docs = load_canonical(out)
    assert len({e.event_type for d in docs for e in d.event_mentions}) == 2


def test_stage_commands_chain(workdir, tmp_path):
    cv_dir = tmp_path / "cv"
    rc = main(["build-class-vectors", "--ontology", str(workdir / "ont.yaml"),
               "--input", str(workdir / "train.jsonl"),
               "--output", str(cv_dir), "--dim", "32"])
    assert rc == 0
    assert (cv_dir / "class_vectors.npz").exists()
    assert (cv_dir / "embed_backend.npz").exists()

    labels = tmp_path / "labels.jsonl"
    rc = main(["pseudo-label", "--class-vectors", str(cv_dir),
               "--input", str(workdir / "train.jsonl"),
               "--output", str(labels)])
    assert rc == 0
    records = [json.loads(l) for l in labels.read_text().splitlines()]
    assert records and all("tags" in r for r in records)

    model_dir = tmp_path / "trig"
    rc = main(["train-trigger", "--class-vectors", str(cv_dir),
               "--input", str(workdir / "train.jsonl"),
               "--pseudo", str(labels), "--gold",
               "--epochs", "3", "--output", str(model_dir)])
    assert rc == 0

    trig_out = tmp_path / "triggers.jsonl"
    rc = main(["predict-trigger", "--class-vectors", str(cv_dir),
               "--model", str(model_dir),
               "--input", str(workdir / "test.jsonl"),
               "--output", str(trig_out)])
    assert rc == 0

    gen_dir = tmp_path / "gen"
    rc = main(["train-args", "--ontology", str(workdir / "ont.yaml"),
               "--input", str(workdir / "train.jsonl"),
               "--output", str(gen_dir), "--epochs", "3",
               "--d-model", "32"])
    assert rc == 0

    preds = tmp_path / "preds.jsonl"
    rc = main(["extract-args", "--ontology", str(workdir / "ont.yaml"),
               "--model", str(gen_dir),
               "--input", str(workdir / "test.jsonl"),
               "--triggers", str(trig_out), "--output", str(preds),
               "--beam-width", "1"])
    assert rc == 0
    assert preds.exists()

    report_path = tmp_path / "reports.json"
    rc = main(["score", "--gold", str(workdir / "test.jsonl"),
               "--pred", str(preds), "--settings", "all",
               "--output", str(report_path)])
    assert rc == 0
    reports = json.loads(report_path.read_text())
    assert {r["setting"] for r in reports} >= {"trigger-id", "arg-cls-head",
                                               "arg-cls-coref"}


def test_extract_args_gold_trigger_bypass(workdir, tmp_path):
    gen_dir = tmp_path / "gen"
    main(["train-args", "--ontology", str(workdir / "ont.yaml"),
          "--input", str(workdir / "train.jsonl"),
          "--output", str(gen_dir), "--epochs", "2", "--d-model", "32"])
    preds = tmp_path / "preds.jsonl"
    rc = main(["extract-args", "--ontology", str(workdir / "ont.yaml"),
               "--model", str(gen_dir),
               "--input", str(workdir / "test.jsonl"),
               "--output", str(preds), "--beam-width", "1"])
    assert rc == 0
    from docevents.metrics import predictions_from_jsonlines
    loaded = predictions_from_jsonlines(preds)
    gold_events = sum(len(d.event_mentions)
                      for d in load_canonical(workdir / "test.jsonl"))
    assert sum(len(p.triggers) for p in loaded) == gold_events


def test_debug_align_prints_trace(workdir, capsys):
    rc = main(["debug-align", "--ontology", str(workdir / "ont.yaml"),
               "--input", str(workdir / "test.jsonl"),
               "--generated", "Mara Ellison communicated with the council"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "unmatched" in out or "==" in out


# ---------------------------------------------------------------------------
# pipeline

def test_pipeline_completes_and_emits_reports(workdir, tmp_path):
    cfg = fast_config(workdir, tmp_path / "run")
    reports = run_pipeline(cfg)
    assert [r.setting for r in reports] == [
        "trigger-id", "trigger-cls", "arg-id-head", "arg-cls-head"]
    out = tmp_path / "run"
    for name in ("config.json", "pseudo_labels.jsonl", "triggers.jsonl",
                 "predictions.jsonl", "reports.json", "reports.txt"):
        assert (out / name).exists(), name
    # config fully serialized (reproducibility manifest)
    cfg_json = json.loads((out / "config.json").read_text())
    assert cfg_json == cfg.to_json()
    assert RunConfig.from_json(cfg_json) == cfg


def test_pipeline_gold_trigger_bypass_skips_trigger_stages(workdir, tmp_path):
    cfg = fast_config(workdir, tmp_path / "run", use_gold_triggers=True)
    reports = run_pipeline(cfg)
    assert not (tmp_path / "run" / "pseudo_labels.jsonl").exists()
    assert not (tmp_path / "run" / "trigger_model").exists()
    by_name = {r.setting: r for r in reports}
    assert by_name["trigger-id"].f1 == 1.0
    assert by_name["trigger-cls"].f1 == 1.0


def test_pipeline_deterministic_and_resumable(workdir, tmp_path):
    cfg1 = fast_config(workdir, tmp_path / "a")
    cfg2 = fast_config(workdir, tmp_path / "b")
    run_pipeline(cfg1)
    run_pipeline(cfg2)
    for name in ("triggers.jsonl", "predictions.jsonl", "reports.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes(), name
    # resume: stage outputs are reused, predictions unchanged
    before = (tmp_path / "a" / "predictions.jsonl").read_bytes()
    cfg3 = fast_config(workdir, tmp_path / "a", resume=True)
    run_pipeline(cfg3)
    assert (tmp_path / "a" / "predictions.jsonl").read_bytes() == before


def test_pipeline_cli_entry(workdir, tmp_path, capsys):
    cfg = fast_config(workdir, tmp_path / "run")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg.to_json()))
    rc = main(["pipeline", "--config", str(cfg_path)])
    assert rc == 0
    assert "trigger-id" in capsys.readouterr().out


def test_pipeline_stage_failure_names_stage(workdir, tmp_path):
    from docevents.pipeline import PipelineStageError

    # an ontology without any keywords leaves no class vectors, so the
    # trigger-training stage cannot build a model
    ont = tmp_path / "nokw.yaml"
    ont.write_text(TOY_ONTOLOGY_YAML.replace(
        "keywords: [kill, die, perish]", "keywords: []").replace(
        "keywords: [", "dropped: ["))
    cfg = fast_config(workdir, tmp_path / "run")
    cfg.ontology = str(ont)
    with pytest.raises(PipelineStageError, match="class-vectors"):
        run_pipeline(cfg)
    # artifacts from before the failure are retained
    assert (tmp_path / "run" / "config.json").exists()
