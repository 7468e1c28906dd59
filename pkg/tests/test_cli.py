"""Command-line interface tests, run in process through main()."""

import csv
import dataclasses
import json
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
from conftest import make_plane

from foldcodec import Bitstream, load_ply, save_ply
from foldcodec.cli import (
    EXIT_CHECKSUM,
    EXIT_DETERMINISM,
    EXIT_EXTERNAL_CODEC,
    EXIT_FAILURE,
    EXIT_OK,
    EXIT_PARSE,
    main,
)

STUB = Path(__file__).parent / "stub_codec.py"

FAST_FLAGS = [
    "--iterations", "150",
    "--refine-iterations", "30",
    "--k", "6",
    "--delta-r-min", "0",
    "--max-rounds", "40",
]


def stub_env(monkeypatch):
    monkeypatch.setenv("FOLDCODEC_BPGENC", f"{sys.executable} {STUB} enc")
    monkeypatch.setenv("FOLDCODEC_BPGDEC", f"{sys.executable} {STUB} dec")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One encoded cloud shared by every read-only CLI test."""
    root = tmp_path_factory.mktemp("cli")
    pc = make_plane(48, seed=5, noise=0.02)
    cloud = root / "cloud.ply"
    save_ply(pc, cloud)
    bitstream = root / "cloud.fpc"
    code = main(["encode", str(cloud), str(bitstream), *FAST_FLAGS])
    assert code == EXIT_OK
    return SimpleNamespace(root=root, pc=pc, cloud=cloud, bitstream=bitstream)


class TestEncode:
    def test_reports_size_and_rate(self, workspace, capsys):
        # re-encode to capture the summary line
        out = workspace.root / "again.fpc"
        code = main(["encode", str(workspace.cloud), str(out), *FAST_FLAGS])
        assert code == EXIT_OK
        line = capsys.readouterr().out.strip().splitlines()[-1]
        assert line.startswith("points=48 patches=1 bytes=")
        assert f"bytes={out.stat().st_size}" in line

    def test_deterministic_across_thread_counts(self, workspace):
        single = workspace.bitstream.read_bytes()
        out = workspace.root / "threaded.fpc"
        code = main(["--threads", "3", "encode", str(workspace.cloud),
                     str(out), *FAST_FLAGS])
        assert code == EXIT_OK
        assert out.read_bytes() == single

    def test_bpg_without_qp_is_usage_error(self, workspace, capsys):
        out = workspace.root / "never.fpc"
        code = main(["encode", str(workspace.cloud), str(out),
                     *FAST_FLAGS, "--codec", "bpg"])
        assert code == EXIT_PARSE
        assert "--qp" in capsys.readouterr().err

    def test_qp_without_bpg_is_usage_error(self, workspace, capsys):
        out = workspace.root / "never.fpc"
        code = main(["encode", str(workspace.cloud), str(out),
                     *FAST_FLAGS, "--qp", "30"])
        assert code == EXIT_PARSE

    def test_missing_external_codec(self, workspace, monkeypatch, capsys):
        monkeypatch.setenv("FOLDCODEC_BPGENC", "definitely-missing-encoder-xyz")
        monkeypatch.setenv("FOLDCODEC_BPGDEC", "definitely-missing-decoder-xyz")
        out = workspace.root / "never.fpc"
        code = main(["encode", str(workspace.cloud), str(out),
                     *FAST_FLAGS, "--codec", "bpg", "--qp", "30"])
        assert code == EXIT_EXTERNAL_CODEC
        assert "definitely-missing-encoder-xyz" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        code = main(["encode", str(tmp_path / "nope.ply"),
                     str(tmp_path / "out.fpc"), *FAST_FLAGS])
        assert code == EXIT_FAILURE
        assert "error:" in capsys.readouterr().err

    def test_invalid_thread_count(self, workspace, capsys):
        code = main(["--threads", "0", "encode", str(workspace.cloud),
                     str(workspace.root / "never.fpc"), *FAST_FLAGS])
        assert code == EXIT_FAILURE


class TestDecode:
    def test_round_trip(self, workspace, tmp_path, capsys):
        out = tmp_path / "decoded.ply"
        code = main(["decode", str(workspace.cloud), str(workspace.bitstream),
                     str(out)])
        assert code == EXIT_OK
        decoded = load_ply(out)
        np.testing.assert_array_equal(decoded.attributes, workspace.pc.attributes)
        # PLY stores float32 positions, so compare at that precision
        expected = workspace.pc.positions.astype(np.float32).astype(np.float64)
        np.testing.assert_array_equal(decoded.positions, expected)
        assert "points=48" in capsys.readouterr().out

    def test_wrong_geometry_exits_checksum(self, workspace, tmp_path, capsys):
        other = make_plane(48, seed=77, noise=0.02)
        geom = tmp_path / "other.ply"
        save_ply(other, geom)
        code = main(["decode", str(geom), str(workspace.bitstream),
                     str(tmp_path / "out.ply")])
        assert code == EXIT_CHECKSUM
        assert "checksum" in capsys.readouterr().err

    def test_corrupt_bitstream_exits_parse(self, workspace, tmp_path, capsys):
        bad = tmp_path / "junk.fpc"
        bad.write_bytes(b"this is not a bitstream at all")
        code = main(["decode", str(workspace.cloud), str(bad),
                     str(tmp_path / "out.ply")])
        assert code == EXIT_PARSE

    def test_tampered_dims_exit_determinism(self, workspace, tmp_path, capsys):
        bs = Bitstream.parse(workspace.bitstream.read_bytes())
        record = dataclasses.replace(bs.patches[0], w_exp=bs.patches[0].w_exp + 1)
        tampered = tmp_path / "tampered.fpc"
        tampered.write_bytes(
            Bitstream(config=bs.config, patches=(record,)).serialize()
        )
        code = main(["decode", str(workspace.cloud), str(tampered),
                     str(tmp_path / "out.ply")])
        assert code == EXIT_DETERMINISM
        assert "determinism" in capsys.readouterr().err

    def test_not_a_ply_geometry(self, workspace, tmp_path):
        geom = tmp_path / "fake.ply"
        geom.write_bytes(b"hello")
        code = main(["decode", str(geom), str(workspace.bitstream),
                     str(tmp_path / "out.ply")])
        assert code == EXIT_PARSE


class TestSweep:
    def test_csv_rates_drop_with_qp(self, workspace, tmp_path, monkeypatch):
        stub_env(monkeypatch)
        out = tmp_path / "sweep.csv"
        code = main(["sweep", str(workspace.cloud), "--qps", "16,30,45",
                     "--output", str(out), *FAST_FLAGS])
        assert code == EXIT_OK
        with open(out, newline="") as f:
            rows = list(csv.DictReader(f))
        assert [r["qp"] for r in rows] == ["16", "30", "45"]
        assert all(r["stage"] == "optimized" for r in rows)
        bpps = [float(r["bpp"]) for r in rows]
        assert bpps[0] > bpps[-1]
        # qp 16 quantizes with step 1: decode is exact on this stub
        assert rows[0]["y_psnr"] == "inf"
        assert float(rows[1]["y_psnr"]) > 0

    def test_stage_selector(self, workspace, tmp_path, monkeypatch, capsys):
        stub_env(monkeypatch)
        out = tmp_path / "folded.csv"
        code = main(["sweep", str(workspace.cloud), "--qps", "30",
                     "--stage", "folded", "--output", str(out), *FAST_FLAGS])
        assert code == EXIT_OK
        with open(out, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 1
        assert rows[0]["stage"] == "folded"
        # the raw fold shares cells, so even lossless pixels lose color detail
        assert rows[0]["y_psnr"] != "inf"

    def test_stdout_output(self, workspace, monkeypatch, capsys):
        stub_env(monkeypatch)
        code = main(["sweep", str(workspace.cloud), "--qps", "20", *FAST_FLAGS])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "qp,bpp,y_psnr,stage"
        assert lines[1].startswith("20,")

    def test_all_qps_failing_exits_external(self, workspace, tmp_path,
                                            monkeypatch, capsys):
        monkeypatch.setenv("FOLDCODEC_BPGENC", "definitely-missing-encoder-xyz")
        monkeypatch.setenv("FOLDCODEC_BPGDEC", "definitely-missing-decoder-xyz")
        code = main(["sweep", str(workspace.cloud), "--qps", "20,30",
                     "--output", str(tmp_path / "s.csv"), *FAST_FLAGS])
        assert code == EXIT_EXTERNAL_CODEC
        err = capsys.readouterr().err
        assert "qp 20" in err and "qp 30" in err

    def test_bad_qps_list(self, workspace, capsys):
        code = main(["sweep", str(workspace.cloud), "--qps", "a,b", *FAST_FLAGS])
        assert code == EXIT_PARSE


class TestAblation:
    def test_json_report(self, workspace, tmp_path):
        out = tmp_path / "ablation.json"
        code = main(["ablation", str(workspace.cloud), "--output", str(out),
                     *FAST_FLAGS])
        assert code == EXIT_OK
        payload = json.loads(out.read_text())
        labels = [s["label"] for s in payload["stages"]]
        assert labels == ["folded", "refined", "optimized"]
        optimized = payload["stages"][2]
        assert optimized["y_psnr_db"] == "inf"
        folded = payload["stages"][0]
        assert isinstance(folded["y_psnr_db"], float)
        for stage in payload["stages"]:
            assert sum(
                int(occ) * count
                for occ, count in stage["occupancy_histogram"].items()
            ) == 48

    def test_stdout_output(self, workspace, capsys):
        code = main(["ablation", str(workspace.cloud), *FAST_FLAGS])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["stages"]) == 3


class TestSelftest:
    def test_passes(self, capsys):
        code = main(["selftest"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("PASS") == 8
        assert "FAIL" not in out


class TestParser:
    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["compress"])
        assert exc_info.value.code == 2

    def test_no_command_exits_2(self):
        with pytest.raises(SystemExit) as exc_info:
            main([])
        assert exc_info.value.code == 2

    def test_help_exits_0(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["--help"])
        assert exc_info.value.code == 0
        assert "encode" in capsys.readouterr().out
