import pytest

from conftest import FIXTURES
from taskenergy.dataset import FILES, Dataset, format_record, read_records
from taskenergy.errors import CorruptRecordError, FlushError
from taskenergy.monitor import run_replay
from taskenergy.synth import generate_synthetic, random_scenario
from taskenergy.trace import read_trace


@pytest.fixture(scope="module")
def dataset():
    tr, _ = generate_synthetic(random_scenario(2, intervals=40))
    ds = run_replay(tr)
    ds.stats["clamped"] = 3
    return ds


def test_write_creates_four_files(tmp_path, dataset):
    out = dataset.write(tmp_path / "a" / "b")
    assert sorted(p.name for p in out.iterdir()) == sorted(FILES)


def test_full_roundtrip(tmp_path, dataset):
    dataset.write(tmp_path)
    again = Dataset.read(tmp_path)
    for name in ("config", "records", "stats", "start", "end", "node_domains", "backend", "skipped"):
        assert getattr(again, name) == getattr(dataset, name), name
    assert again.profile.power() == dataset.profile.power()
    assert {u: (b.task_name, b.node, b.spans) for u, b in again.bindings.items()} == {
        u: (b.task_name, b.node, b.spans) for u, b in dataset.bindings.items()
    }
    assert [(l.interval_start, l.interval_end, l.entries) for l in again.ledgers] == [
        (l.interval_start, l.interval_end, l.entries) for l in dataset.ledgers
    ]


def test_rewrite_is_byte_identical(tmp_path, dataset):
    dataset.write(tmp_path / "a")
    Dataset.read(tmp_path / "a").write(tmp_path / "b")
    for name in FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_records_keep_float_precision(tmp_path, dataset):
    path = tmp_path / "records.tl"
    path.write_text("".join(format_record(r) + "\n" for r in dataset.records))
    assert read_records(path) == dataset.records


def test_missing_file(tmp_path, dataset):
    dataset.write(tmp_path)
    (tmp_path / "ledgers.tl").unlink()
    with pytest.raises(FileNotFoundError):
        Dataset.read(tmp_path)


@pytest.mark.parametrize("name", ["static.tl", "pods.tl", "ledgers.tl", "records.tl"])
def test_corrupt_line_reports_path_and_line(tmp_path, dataset, name):
    dataset.write(tmp_path)
    path = tmp_path / name
    lines = path.read_text().splitlines()
    # drop the last field of the first line
    lines[0] = lines[0].rsplit(" ", 1)[0] if name != "static.tl" else "STATIC node=n0"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorruptRecordError) as info:
        Dataset.read(tmp_path)
    assert info.value.path == str(path)
    assert info.value.line == 1


def test_unwritable_target_raises_flush_error(tmp_path, dataset):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(FlushError) as info:
        dataset.write(blocker / "sub")
    assert str(blocker / "sub") == info.value.partial_output


def test_min_dataset_fixture_counts(tmp_path):
    ds = run_replay(read_trace(FIXTURES / "min.trace"))
    ds.write(tmp_path)
    recs = read_records(tmp_path / "records.tl")
    # only the pod's process gets records; background pids are not tracked
    assert len(recs) == 10
    assert {r.pid for r in recs} == {1234}
