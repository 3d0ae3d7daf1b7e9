import json
from collections import Counter

import numpy as np
import pytest

from contract_tagger.cli import main
from contract_tagger.data import format_dataset, read_dataset, write_dataset
from contract_tagger.model import FeatureConfig, Model
from contract_tagger.synthetic import SyntheticSpec, generate_synthetic, write_synthetic
from contract_tagger.training import train
from tiny import tiny_config, tiny_corpus


@pytest.fixture(scope="module")
def trained():
    data = tiny_corpus(n_train=60)
    model, _ = train(tiny_config(max_epochs=2), data["train"], data["dev"])
    return model, data


# ------------------------------------------------------------------ model

def test_save_load_save_byte_identical(trained, tmp_path):
    model, data = trained
    model.save(tmp_path / "a")
    again = Model.load(tmp_path / "a")
    again.save(tmp_path / "b")
    for name in ("manifest.json", "weights.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert all(np.array_equal(model.params[k], again.params[k]) for k in model.params)
    assert again.predict(list(data["test"])) == model.predict(list(data["test"]))


def test_catalog_tiles_payload(trained, tmp_path):
    model, _ = trained
    manifest, payload = model.manifest()
    end = 0
    for entry in manifest["tensors"]:
        assert entry["offset"] == end
        end += entry["nbytes"]
    assert end == len(payload)


def test_truncated_payload_rejected(trained, tmp_path):
    model, _ = trained
    model.save(tmp_path / "m")
    w = tmp_path / "m" / "weights.bin"
    w.write_bytes(w.read_bytes()[:-8])
    with pytest.raises(ValueError):
        Model.load(tmp_path / "m")


@pytest.mark.parametrize("kind,use_crf,flag", [("transformer", True, "word+pos+shape+char"),
                                               ("dilated_cnn", False, "word")])
def test_round_trip_other_configs(kind, use_crf, flag, tmp_path):
    data = tiny_corpus(n_train=20)
    cfg = tiny_config(kind=kind, use_crf=use_crf, max_epochs=1)
    cfg.features = FeatureConfig.from_flag(flag, word_dim=8, pos_dim=4, shape_dim=4, char_dim=5,
                                           char_filters=6)
    model, _ = train(cfg, data["train"], data["dev"])
    model.save(tmp_path / "m")
    again = Model.load(tmp_path / "m")
    assert again.predict(list(data["test"])) == model.predict(list(data["test"]))


def test_feature_flags():
    assert FeatureConfig.from_flag("word").input_dim == 200
    assert FeatureConfig.from_flag("word+pos+shape").input_dim == 250
    assert FeatureConfig.from_flag("+char").input_dim == 280
    with pytest.raises(ValueError):
        FeatureConfig.from_flag("pos")


# -------------------------------------------------------------- synthetic

def test_synthetic_balance_and_determinism(tmp_path):
    spec = SyntheticSpec(seed=5, n_train=1000, n_dev=1, n_test=1, distance=2)
    counts = Counter(t for s in generate_synthetic(spec)["train"] for t in s.tags if t.startswith("B-"))
    start, eff = counts["B-StartDate"], counts["B-EffectiveDate"]
    assert abs(start - eff) / (start + eff) < 0.1
    a = write_synthetic(spec, tmp_path / "a")
    b = write_synthetic(spec, tmp_path / "b")
    assert all(a[k].read_bytes() == b[k].read_bytes() for k in a)


def test_synthetic_trigger_distance():
    data = generate_synthetic(SyntheticSpec(seed=1, n_train=50, n_dev=1, n_test=1, distance=40))
    for s in data["train"]:
        date = next(i for i, t in enumerate(s.tags) if t.endswith("Date"))
        trig = next(i for i, w in enumerate(s.tokens) if w in ("signed", "effective"))
        assert date - trig == 40 > 7
        assert s.tags[date].endswith("StartDate") == (s.tokens[trig] == "signed")


def test_chain_corpus_is_valid_bio():
    data = generate_synthetic(SyntheticSpec(seed=2, n_train=50, n_dev=1, n_test=1, kind="chain"))
    for s in data["train"]:
        for prev, cur in zip(("O",) + s.tags, s.tags):
            if cur.startswith("I-"):
                assert prev[2:] == cur[2:]


# -------------------------------------------------------------------- cli

@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--out", str(out), "--n-train", "40", "--n-dev", "10", "--n-test", "10",
                 "--seed", "3"]) == 0
    return out


@pytest.fixture(scope="module")
def cli_model(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "m"
    cfg = corpus_dir / "cfg.json"
    cfg.write_text(json.dumps({"encoder": {"units": 8}, "features": {"word_dim": 8, "pos_dim": 4,
                                                                    "shape_dim": 4},
                               "batch_size": 8, "lr": 0.003}))
    rc = main(["train", "--data", str(corpus_dir / "train.txt"), "--dev", str(corpus_dir / "dev.txt"),
               "--test", str(corpus_dir / "test.txt"), "--config", str(cfg), "--out", str(out),
               "--epochs", "2", "--runs", "2"])
    assert rc == 0
    return out


def test_cli_train_outputs(cli_model, capsys):
    hist = json.loads((cli_model / "history.json").read_text())
    assert len(hist["history"]) == 2 and (cli_model / "weights.bin").exists()


def test_cli_missing_path(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert main(["train", "--data", str(missing), "--out", str(tmp_path / "m")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_cli_layers_outside_grid_warns(corpus_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"encoder": {"units": 8, "layers": 5},
                               "features": {"word_dim": 8, "use_pos": False, "use_shape": False}}))
    with pytest.warns(UserWarning, match="outside the tuning grid"):
        rc = main(["train", "--data", str(corpus_dir / "train.txt"), "--config", str(cfg),
                   "--out", str(tmp_path / "m"), "--epochs", "0", "--runs", "1"])
    assert rc == 0


def test_cli_evaluate(cli_model, corpus_dir, tmp_path, capsys):
    rep = tmp_path / "rep.json"
    assert main(["evaluate", "--model", str(cli_model), "--data", str(corpus_dir / "test.txt"),
                 "--gold-as-pred", "--out", str(rep)]) == 0
    report = json.loads(rep.read_text())
    assert report["macro"] == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    assert capsys.readouterr().out.splitlines()[-1].split() == ["macro-avg", "100.0", "100.0", "100.0"]
    assert main(["evaluate", "--model", str(cli_model), "--data", str(corpus_dir / "test.txt")]) == 0


def test_cli_evaluate_schema_mismatch(cli_model, tmp_path, capsys):
    chain = tmp_path / "chain.txt"
    write_dataset(chain, tiny_corpus(kind="chain")["test"])
    assert main(["evaluate", "--model", str(cli_model), "--data", str(chain)]) == 2
    err = capsys.readouterr().err
    assert "B-Party" in err and "B-Alpha" in err


def test_cli_predict(cli_model, corpus_dir, tmp_path, capsys):
    data = read_dataset(corpus_dir / "test.txt")
    untagged = tmp_path / "in.txt"
    untagged.write_text("\n\n".join("\n".join(f"{w}\t{p}" for w, p in zip(s.tokens, s.pos))
                                    for s in data) + "\n")
    outs = []
    for i in range(2):
        out = tmp_path / f"pred{i}.jsonl"
        assert main(["predict", "--model", str(cli_model), "--data", str(untagged), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    recs = [json.loads(line) for line in outs[0].decode().splitlines()]
    assert len(recs) == len(data) and recs[0]["tokens"] == list(data[0].tokens)
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["predict", "--model", str(cli_model), "--data", str(empty)]) == 0
    assert capsys.readouterr().out == ""


def test_cli_stats(corpus_dir, capsys):
    assert main(["stats", "--data", str(corpus_dir / "test.txt")]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["sequences"] == 10 and stats["spans"]["Title"] == 10


def test_cli_wfr(tmp_path, capsys):
    data = tmp_path / "d.txt"
    data.write_text("#zone=z types=A\nunable\tJJ\tB-A\nthe\tDT\tO\n\n")
    vocab = tmp_path / "vocab.txt"
    vocab.write_text("un\n##able\nthe\n")
    assert main(["wfr", "--data", str(data), "--vocab", str(vocab)]) == 0
    assert main(["wfr", "--data", str(data), "--vocab", str(vocab), "--entities-only"]) == 0
    assert capsys.readouterr().out.split() == ["1.5000", "2.0000"]


def test_cli_bad_dataset_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("#zone=z types=A\nx\tNN\tB-Bogus\n\n")
    assert main(["stats", "--data", str(bad)]) == 2
    assert "B-Bogus" in capsys.readouterr().err


def test_cli_tune(corpus_dir, tmp_path, capsys):
    log = tmp_path / "trials.jsonl"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"features": {"word_dim": 8, "use_pos": False, "use_shape": False}}))
    rc = main(["tune", "--data", str(corpus_dir / "dev.txt"), "--config", str(cfg), "--budget", "2",
               "--folds", "1", "--epochs", "1", "--out", str(log)])
    assert rc == 0
    assert len(log.read_text().splitlines()) == 2
    assert "best:" in capsys.readouterr().out


def test_format_matches_written_file(corpus_dir):
    data = read_dataset(corpus_dir / "dev.txt")
    assert format_dataset(data) == (corpus_dir / "dev.txt").read_text()
