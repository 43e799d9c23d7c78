#!/usr/bin/env python3
"""
Test script for the command-line interface and its CSV/manifest outputs
"""
import os
import sys
import json
import logging
import tempfile
import traceback
from dataclasses import replace

import yaml

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from main import EXIT_OK, EXIT_SOLVER, EXIT_USAGE, float_range, main
from utils.instance_store import load_instance, save_instance
from utils.run_manifest import read_csv

# Setup logging
logging.basicConfig(
    level=logging.WARNING,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

SETTINGS_FILE = os.path.join(os.path.dirname(__file__), "config", "settings.yaml")


class Workspace:
    """Temporary directory with a settings file pointing every output inside it"""

    def __init__(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = self._tmp.name
        with open(SETTINGS_FILE, "r", encoding="utf-8") as f:
            settings = yaml.safe_load(f)
        settings["paths"] = {
            "instances": os.path.join(self.root, "instances"),
            "results": os.path.join(self.root, "results"),
            "output_logs": os.path.join(self.root, "logs"),
        }
        settings["logging"]["console_logging"] = False
        settings["solver"]["q_steps"] = 30
        self.config = os.path.join(self.root, "settings.yaml")
        with open(self.config, "w", encoding="utf-8") as f:
            yaml.safe_dump(settings, f)

    def path(self, *parts):
        return os.path.join(self.root, *parts)

    def run(self, *args):
        return main(["--config", self.config, *args])

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._tmp.cleanup()


def test_gen_is_deterministic():
    with Workspace() as ws:
        assert ws.run("gen", "--n", "6", "--seed", "7", "--out", ws.path("a.json")) == EXIT_OK
        assert ws.run("gen", "--n", "6", "--seed", "7", "--out", ws.path("b.json")) == EXIT_OK
        with open(ws.path("a.json"), "rb") as fa, open(ws.path("b.json"), "rb") as fb:
            assert fa.read() == fb.read()
        inst = load_instance(ws.path("a.json"))
        assert inst.n == 6 and inst.seed == 7


def test_gen_overrides_and_default_path():
    with Workspace() as ws:
        assert ws.run("gen", "--n", "5", "--seed", "3", "--map", "200", "--mode", "distance",
                      "--b", "150", "--gamma", "0.4") == EXIT_OK
        inst = load_instance(ws.path("instances", "instance_n5_seed3.json"))
        assert inst.map_size == 200.0
        assert (inst.coords <= 200.0).all()
        assert inst.mode.value == "distance"
        assert inst.econ.b == 150.0 and inst.econ.gamma == 0.4


def test_usage_errors():
    with Workspace() as ws:
        assert ws.run("gen", "--n", "0") == EXIT_USAGE
        assert ws.run("gen", "--n", "5", "--mode", "teleport") == EXIT_USAGE
        assert ws.run("gen", "--n", "5", "--gamma", "1.5") == EXIT_USAGE
        assert ws.run("compare", "--instance", ws.path("missing.json")) == EXIT_USAGE
        assert ws.run("frobnicate") == EXIT_USAGE
        assert ws.run() == EXIT_USAGE
    assert main(["--config", "/nonexistent/settings.yaml", "verify-theorem1"]) == EXIT_USAGE


def test_compare_quantity_mode():
    """Quantity-only runs carry no DC; reruns produce identical rows"""
    with Workspace() as ws:
        ws.run("gen", "--n", "8", "--seed", "11", "--out", ws.path("inst.json"))
        out = ws.path("cmp.csv")
        assert ws.run("compare", "--instance", ws.path("inst.json"), "--mode", "quantity",
                      "--seed", "5", "--out", out) == EXIT_OK
        rows = read_csv(out)
        assert len(rows) == 1
        row = rows[0]
        assert row["n"] == "8"
        assert row["dc_x"] == "" and row["dc_y"] == ""
        assert abs(float(row["P_CSM"]) - float(row["P_DSM"]) - float(row["delta_expected"])) <= 0.011

        with open(out, "r", encoding="utf-8") as f:
            assert f.readline().strip() == "# manifest: cmp.manifest.json"
        with open(ws.path("cmp.manifest.json"), "r", encoding="utf-8") as f:
            manifest = json.load(f)
        assert manifest["command"] == "compare"
        assert 5 in manifest["seeds"] and 11 in manifest["seeds"]
        assert {"solve", "simulate"} <= set(manifest["durations_seconds"])

        again = ws.path("cmp2.csv")
        ws.run("compare", "--instance", ws.path("inst.json"), "--mode", "quantity", "--seed", "5", "--out", again)
        assert read_csv(again) == rows


def test_compare_with_location_and_payoffs():
    with Workspace() as ws:
        ws.run("gen", "--n", "5", "--seed", "2", "--out", ws.path("inst.json"))
        out = ws.path("cmp.csv")
        assert ws.run("compare", "--instance", ws.path("inst.json"), "--payoffs", "--samples", "50",
                      "--trace", "--out", out) == EXIT_OK
        row = read_csv(out)[0]
        assert row["dc_x"] != "" and row["dc_y"] != ""
        trace = read_csv(ws.path("cmp_trace.csv"))
        assert len(trace) >= 30
        assert max(float(p["profit"]) for p in trace) <= float(row["P_CSM"]) + 0.01
        supplier, retailers = float(row["supplier_payoff"]), float(row["retailer_payoff"])
        assert abs(supplier + retailers - float(row["P_DSM"])) <= 0.02


def test_compare_empty_search_range():
    """A non-positive service floor is a solver failure, not a usage error"""
    with Workspace() as ws:
        ws.run("gen", "--n", "4", "--seed", "6", "--out", ws.path("inst.json"))
        inst = load_instance(ws.path("inst.json"))
        thin = tuple(replace(r, demand=replace(r.demand, mu=5.0, sigma=20.0)) for r in inst.retailers)
        save_instance(replace(inst, retailers=thin), ws.path("thin.json"))
        assert ws.run("compare", "--instance", ws.path("thin.json"), "--out", ws.path("thin.csv")) == EXIT_SOLVER


def test_retailer_dc():
    with Workspace() as ws:
        ws.run("gen", "--n", "4", "--seed", "9", "--out", ws.path("inst.json"))
        out = ws.path("rdc.csv")
        assert ws.run("retailer-dc", "--instance", ws.path("inst.json"), "--profile", "--out", out) == EXIT_OK
        row = read_csv(out)[0]
        p_csm = float(row["P_CSM"])
        assert float(row["P_CSM_retailer"]) <= p_csm + 1e-4 * abs(p_csm)
        assert 0 <= int(row["retailer_id"]) < 4
        profile = read_csv(ws.path("rdc_profile.csv"))
        assert len(profile) == 4
        assert min(float(p["separation"]) for p in profile) == float(row["separation"])

        ws.run("gen", "--n", "4", "--seed", "9", "--mode", "quantity", "--out", ws.path("q.json"))
        assert ws.run("retailer-dc", "--instance", ws.path("q.json")) == EXIT_USAGE


def test_verify_witness():
    with Workspace() as ws:
        assert ws.run("verify-theorem1") == EXIT_OK
        assert ws.run("verify-theorem1", "--z", "1", "0", "0") == EXIT_OK
        assert ws.run("verify-theorem1", "--retailer", "600", "600", "--b", "150") == EXIT_OK


def test_sweep_gamma_range():
    with Workspace() as ws:
        ws.run("gen", "--n", "6", "--seed", "4", "--mode", "quantity", "--out", ws.path("inst.json"))
        out = ws.path("gamma.csv")
        assert ws.run("sweep", "--instance", ws.path("inst.json"), "--param", "gamma",
                      "--from", "0.1", "--to", "0.9", "--step", "0.1", "--out", out) == EXIT_OK
        rows = read_csv(out)
        assert [r["value"] for r in rows] == ["0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"]
        long_rows = read_csv(ws.path("gamma_long.csv"))
        assert len(long_rows) == 9 * 10
        assert {r["series"] for r in long_rows} >= {"P_DSM", "P_CSM", "M1", "M3"}


def test_sweep_rates_and_errors():
    with Workspace() as ws:
        ws.run("gen", "--n", "4", "--seed", "4", "--out", ws.path("inst.json"))
        out = ws.path("rates.csv")
        assert ws.run("sweep", "--instance", ws.path("inst.json"), "--param", "rates",
                      "--pairs", "0.003:0.005,0.03:0.05", "--out", out) == EXIT_OK
        assert [r["value"] for r in read_csv(out)] == ["0.003:0.005", "0.03:0.05"]

        inst = ws.path("inst.json")
        assert ws.run("sweep", "--instance", inst, "--param", "gamma", "--values", ",") == EXIT_USAGE
        assert ws.run("sweep", "--instance", inst, "--param", "gamma", "--from", "0.5", "--to", "0.1",
                      "--step", "0.1") == EXIT_USAGE
        assert ws.run("sweep", "--instance", inst, "--param", "rates") == EXIT_USAGE
        assert ws.run("sweep", "--instance", inst, "--param", "rates", "--pairs", "0.1") == EXIT_USAGE
        assert ws.run("sweep", "--instance", inst, "--param", "wholesale", "--values", "1") == EXIT_USAGE


def test_experiment():
    with Workspace() as ws:
        out = ws.path("exp.csv")
        assert ws.run("experiment", "--n-values", "3,5", "--seed", "8", "--mode", "quantity", "--out", out) == EXIT_OK
        rows = read_csv(out)
        assert [r["n"] for r in rows] == ["3", "5"]
        assert all(r["dc_x"] == "" for r in rows)
        assert "delta_transport" in rows[0]
        assert ws.run("experiment", "--n-values", "3,x") == EXIT_USAGE


def test_float_range():
    assert float_range(0.1, 0.9, 0.1) == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert float_range(500.0, 2000.0, 500.0) == [500.0, 1000.0, 1500.0, 2000.0]
    assert float_range(1.0, 0.0, 0.5) == []


def main_tests():
    """Run all tests"""
    logger.info("=" * 60)
    logger.info("CLI Test Suite")
    logger.info("=" * 60)

    tests = [
        ("Gen Determinism", test_gen_is_deterministic),
        ("Gen Overrides", test_gen_overrides_and_default_path),
        ("Usage Errors", test_usage_errors),
        ("Compare Quantity Mode", test_compare_quantity_mode),
        ("Compare With Location", test_compare_with_location_and_payoffs),
        ("Empty Search Range", test_compare_empty_search_range),
        ("Retailer as DC", test_retailer_dc),
        ("Witness Check", test_verify_witness),
        ("Gamma Sweep", test_sweep_gamma_range),
        ("Rate Sweep and Errors", test_sweep_rates_and_errors),
        ("Experiment", test_experiment),
        ("Float Range", test_float_range),
    ]

    results = []
    for name, test_func in tests:
        try:
            test_func()
            results.append((name, True))
        except Exception as e:
            logger.error(f"Test '{name}' failed: {e!r}")
            traceback.print_exc()
            results.append((name, False))

    # Summary
    logger.info("\n" + "=" * 60)
    logger.info("Test Summary")
    logger.info("=" * 60)

    passed = sum(1 for _, result in results if result)
    total = len(results)

    for name, result in results:
        status = "✓ PASS" if result else "✗ FAIL"
        logger.info(f"{status}: {name}")

    logger.info(f"\nTotal: {passed}/{total} tests passed")
    return 0 if passed == total else 1


if __name__ == "__main__":
    sys.exit(main_tests())
