import json
import threading

import pytest

from bdtr import cli
from bdtr.engine import EngineConfig
from bdtr.errors import MalformedTrace
from bdtr.gateway import ScriptedGateway
from bdtr.runner import TraceSink, run_samples
from bdtr.trace import load_traces
from scenarios import bridge_batch, write_project


@pytest.fixture
def project(tmp_path):
    samples, script = bridge_batch(6)
    return write_project(tmp_path, samples, script)


def test_validate_clean(project, capsys):
    assert cli.main(["validate", "--config", str(project)]) == 0
    assert capsys.readouterr().out.strip().endswith("0 problems")


def test_validate_unresolved_gold(tmp_path, capsys):
    samples, script = bridge_batch(2)
    samples[1] = samples[1].__class__(samples[1].id, "?", ("x",), "bridge", ("no_such_doc",))
    cfg = write_project(tmp_path, samples, script)
    assert cli.main(["validate", "--config", str(cfg)]) == 2
    out = capsys.readouterr().out
    assert "'q001' gold id 'no_such_doc' not in corpus" in out and "1 problems" in out


def test_validate_template_missing_question(tmp_path, capsys):
    samples, script = bridge_batch(1)
    prompts = tmp_path / "prompts"
    prompts.mkdir()
    (prompts / "dual_thought.txt").write_text("Context:\n{context}\nGive two thoughts.", encoding="utf-8")
    cfg = write_project(tmp_path, samples, script, prompts_dir="prompts")
    assert cli.main(["validate", "--config", str(cfg)]) == 2
    assert "question" in capsys.readouterr().out


def test_unknown_config_key(tmp_path, capsys):
    samples, script = bridge_batch(1)
    cfg = write_project(tmp_path, samples, script, engine={"roundz": 3})
    assert cli.main(["validate", "--config", str(cfg)]) == 2
    assert "roundz" in capsys.readouterr().err


def test_run_deterministic_across_concurrency(project):
    root = project.parent
    assert cli.main(["run", "--config", str(project), "--concurrency", "1", "--output-dir", str(root / "c1")]) == 0
    assert cli.main(["run", "--config", str(project), "--concurrency", "4", "--output-dir", str(root / "c4")]) == 0
    a = (root / "c1" / "traces.jsonl").read_bytes()
    assert a == (root / "c4" / "traces.jsonl").read_bytes()
    assert not (root / "c1" / "traces.partial.jsonl").exists()
    summary = json.loads((root / "c4" / "run_summary.json").read_text())
    assert summary["samples"] == 6 and summary["errors"] == 0 and summary["concurrency"] == 4
    ids = [t.sample_id for t in load_traces(root / "c1" / "traces.jsonl")]
    assert ids == sorted(ids)


def test_run_rejects_several_rounds(project):
    assert cli.main(["run", "--config", str(project), "--rounds", "1,2"]) == 2


def test_eval_single_k(project, capsys):
    root = project.parent
    assert cli.main(["run", "--config", str(project)]) == 0
    code = cli.main(["eval", "--traces", str(root / "out" / "traces.jsonl"), "--qa", str(root / "qa.jsonl"),
                     "--ks", "5", "--output-dir", str(root / "ev")])
    assert code == 0
    header = (root / "ev" / "per_sample.csv").read_text().splitlines()[0]
    assert header == "sample_id,strategy,em,f1,recall@5,type"
    report = json.loads((root / "ev" / "report.json").read_text())
    assert list(report["recall_at"]) == ["5"]
    assert report["em"] == 0.5
    assert "EM   0.5000" in capsys.readouterr().out


def test_eval_truncated_trace(project, capsys):
    root = project.parent
    assert cli.main(["run", "--config", str(project)]) == 0
    path = root / "out" / "traces.jsonl"
    lines = path.read_text().splitlines()
    lines[2] = lines[2][: len(lines[2]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MalformedTrace) as err:
        load_traces(path)
    assert err.value.line_number == 3
    assert cli.main(["eval", "--traces", str(path), "--qa", str(root / "qa.jsonl")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_sweep_outputs(project):
    root = project.parent
    assert cli.main(["sweep", "--config", str(project), "--rounds", "1,2,3"]) == 0
    sweep = root / "out" / "sweep"
    for r in (1, 2, 3):
        assert (sweep / f"R{r}" / "traces.jsonl").exists()
        assert (sweep / f"R{r}" / "report.json").exists()
    doc = json.loads((sweep / "sweep.json").read_text())
    assert sorted(doc) == ["1", "2", "3"]
    curve = (sweep / "pool_size_curve.csv").read_text().splitlines()
    assert curve[0] == "rounds,mean_pool_size,em,f1,recall@5,recall@10"
    sizes = [float(row.split(",")[1]) for row in curve[1:]]
    assert sizes == sorted(sizes)


def test_compare_two_strategies(project):
    root = project.parent
    assert cli.main(["compare", "--config", str(project), "--strategies", "bdtr,ircot"]) == 0
    doc = json.loads((root / "out" / "compare" / "compare.json").read_text())
    assert set(doc["metrics"]) == {"bdtr", "ircot"}
    pair = doc["complementarity"]["pairwise"][0]
    assert (pair["a"], pair["b"]) == ("bdtr", "ircot")
    # both strategies take their final answer from the scripted answer role
    assert pair["both"] == ["q000", "q002", "q004"]
    assert pair["only_a"] == [] and pair["only_b"] == []
    assert doc["metrics"]["ircot"]["recall_at_final"]["5"] == 1.0
    assert "bdtr vs ircot" in (root / "out" / "compare" / "compare.txt").read_text()


def test_compare_single_strategy(project):
    root = project.parent
    assert cli.main(["compare", "--config", str(project), "--strategies", "bdtr"]) == 0
    doc = json.loads((root / "out" / "compare" / "compare.json").read_text())
    assert "pairwise" not in doc["complementarity"]


def test_compare_unknown_strategy(project):
    with pytest.raises(SystemExit) as err:
        cli.main(["compare", "--config", str(project), "--strategies", "bdtr,magic"])
    assert err.value.code == 2


def test_http_missing_key(tmp_path, monkeypatch, capsys):
    samples, script = bridge_batch(2)
    monkeypatch.delenv("BDTR_TEST_NO_SUCH_KEY", raising=False)
    cfg = write_project(
        tmp_path, samples, script,
        gateway={"mode": "http", "base_url": "http://127.0.0.1:9", "model": "m", "api_key_env": "BDTR_TEST_NO_SUCH_KEY"},
    )
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert "BDTR_TEST_NO_SUCH_KEY" in capsys.readouterr().err


def test_http_unreachable_is_runtime_failure(tmp_path, monkeypatch, capsys):
    samples, script = bridge_batch(2)
    monkeypatch.setenv("BDTR_TEST_KEY", "k")
    cfg = write_project(
        tmp_path, samples, script,
        gateway={"mode": "http", "base_url": "http://127.0.0.1:9", "model": "m",
                 "api_key_env": "BDTR_TEST_KEY", "max_retries": 0, "timeout": 2},
    )
    assert cli.main(["run", "--config", str(cfg)]) == 1
    assert "every sample failed" in capsys.readouterr().err


def test_interrupted_run_leaves_complete_lines(tmp_path, bridge_index):
    samples, script = bridge_batch(8)
    gateway = ScriptedGateway(script)
    path = tmp_path / "partial.jsonl"
    stop_after = 3
    done = []
    lock = threading.Lock()

    class Interrupt(Exception):
        pass

    def on_done(trace):
        with lock:
            done.append(trace.sample_id)
            if len(done) >= stop_after:
                raise Interrupt

    with TraceSink(path) as sink, pytest.raises(Interrupt):
        run_samples(samples, bridge_index, gateway, EngineConfig(rounds=1), concurrency=1, sink=sink, on_done=on_done)
    lines = path.read_text().splitlines()
    assert len(lines) == stop_after
    assert [json.loads(line)["sample_id"] for line in lines] == ["q000", "q001", "q002"]
    assert all("timing" in json.loads(line) for line in lines)


def test_run_samples_preserves_order(bridge_index):
    samples, script = bridge_batch(10)
    gateway = ScriptedGateway(script, latency=0.001)
    traces = run_samples(samples, bridge_index, gateway, EngineConfig(rounds=1), concurrency=5)
    assert [t.sample_id for t in traces] == [s.id for s in samples]
    with pytest.raises(ValueError):
        run_samples(samples, bridge_index, gateway, EngineConfig(), concurrency=0)
