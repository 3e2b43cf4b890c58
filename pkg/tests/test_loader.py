#!/usr/bin/env python3
"""
Unit tests for the experiment config loader
"""

import os
import sys
import tempfile
import unittest
from pathlib import Path

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from pertloss.errors import ConfigError
from pertloss.loader import ConfigLoader
from pertloss.runner import ExperimentOutcome, write_results

CONSISTENCY = """
experiment: consistency
problem:
  kind: mle_expfam
  shape: [10]
  nonzeros: 3
  magnitude: 0.5
perturbation:
  kind: gaussian_additive
  sigma_eta: 1.0
regularizer:
  kind: l1
solver:
  alpha: 2.0
  xi: 1.0e-4
trials: 100
n_grid: [100, 1000]
"""


class TestConfigLoader(unittest.TestCase):
    """Test the config file loader"""

    def _write(self, text, suffix='.yaml'):
        with tempfile.NamedTemporaryFile(mode='w', suffix=suffix, delete=False) as f:
            f.write(text)
        self.addCleanup(os.unlink, f.name)
        return f.name

    def test_load_file_basic(self):
        """Test loading a basic config file"""
        data = ConfigLoader.load_file(self._write(CONSISTENCY))
        self.assertEqual(data["experiment"], "consistency")
        self.assertEqual(data["problem"]["shape"], [10])

    def test_load_file_not_found(self):
        """Test error when file doesn't exist"""
        with self.assertRaises(FileNotFoundError):
            ConfigLoader.load_file("nonexistent.yaml")

    def test_load_file_wrong_extension(self):
        """Test error when file has wrong extension"""
        with self.assertRaises(ValueError):
            ConfigLoader.load_file(self._write(CONSISTENCY, suffix='.txt'))

    def test_json_is_accepted(self):
        """Test that a JSON document loads as YAML"""
        data = ConfigLoader.load_file(self._write('{"experiment": "rate_table"}', suffix='.json'))
        self.assertEqual(data, {"experiment": "rate_table"})

    def test_load_from_empty_string(self):
        """Test error on empty string"""
        with self.assertRaises(ValueError):
            ConfigLoader.load_from_string("")

    def test_load_from_string_not_mapping(self):
        """Test error when the document is a list"""
        with self.assertRaises(ConfigError):
            ConfigLoader.load_from_string("- 1\n- 2\n")

    def test_malformed_yaml(self):
        """Test that broken YAML is a config error"""
        with self.assertRaises(ConfigError):
            ConfigLoader.load_from_string("experiment: [unclosed")

    def test_load_config(self):
        """Test validation into an ExperimentConfig"""
        cfg = ConfigLoader.load_config(self._write(CONSISTENCY))
        self.assertEqual(cfg.trials, 100)
        self.assertEqual(cfg.problem_spec().true_hypothesis.values.sum(), 1.5)
        self.assertEqual(cfg.perturbation_spec().sigma_eta, 1.0)

    def test_missing_file_is_config_error(self):
        """Test that load_config reports a missing file as a config error"""
        with self.assertRaises(ConfigError):
            ConfigLoader.load_config("nonexistent.yaml")


class TestValidation(unittest.TestCase):
    """Test that module invariants are re-checked at load"""

    def _invalid(self, text):
        with self.assertRaises(ConfigError):
            ConfigLoader.validate(ConfigLoader.load_from_string(text))

    def test_unknown_key(self):
        """Test that unknown keys are rejected"""
        self._invalid(CONSISTENCY + "colour: blue\n")

    def test_unknown_nested_key(self):
        """Test that unknown keys inside a section are rejected"""
        self._invalid(CONSISTENCY.replace("  kind: l1", "  kind: l1\n  weight: 2"))

    def test_zero_trials(self):
        """Test that trials must be positive"""
        self._invalid(CONSISTENCY.replace("trials: 100", "trials: 0"))

    def test_consistency_minimum_trials(self):
        """Test that consistency needs 100 trials"""
        self._invalid(CONSISTENCY.replace("trials: 100", "trials: 50"))

    def test_alpha_below_two(self):
        """Test that alpha < 2 is rejected"""
        self._invalid(CONSISTENCY.replace("alpha: 2.0", "alpha: 1.5"))

    def test_sign_flip_q(self):
        """Test that q <= 1/2 is rejected"""
        self._invalid(CONSISTENCY.replace("kind: gaussian_additive", "kind: sign_flip\n  q: 0.4"))

    def test_theta_source(self):
        """Test that theta_star and shape are exclusive"""
        self._invalid(CONSISTENCY.replace("shape: [10]", "shape: [10]\n  theta_star: [0.0]"))

    def test_group_cover(self):
        """Test that groups must cover the hypothesis"""
        self._invalid(CONSISTENCY.replace("  kind: l1", "  kind: group_l12\n  group_sizes: [5, 4]"))

    def test_irrecoverability_mechanism(self):
        """Test that the adversary's mechanism must match its class"""
        self._invalid("experiment: irrecoverability\nirrecoverability: {kind: glm_labels}\n"
                      "perturbation: {kind: sign_flip, q: 0.55}\ntrials: 1000\n")

    def test_irrecoverability_feasibility(self):
        """Test that infeasible gamma is rejected"""
        self._invalid("experiment: irrecoverability\nirrecoverability: {kind: glm_labels, n: 10}\n"
                      "perturbation: {kind: gaussian_additive, sigma_eta: 5}\n"
                      "gamma: 0.9\ntrials: 1000\n")


class TestManifest(unittest.TestCase):
    """Test that manifests reproduce the resolved config"""

    def test_round_trip(self):
        """Test that load_manifest rebuilds the same config"""
        cfg = ConfigLoader.validate(ConfigLoader.load_from_string(CONSISTENCY))
        with tempfile.TemporaryDirectory() as tmpdir:
            write_results(ExperimentOutcome(experiment=cfg.experiment), cfg, tmpdir)
            again = ConfigLoader.load_manifest(tmpdir)
        self.assertEqual(again.model_dump(), cfg.model_dump())

    def test_find_config_files(self):
        """Test finding config files in directory"""
        with tempfile.TemporaryDirectory() as tmpdir:
            Path(os.path.join(tmpdir, "sweep.yaml")).touch()
            Path(os.path.join(tmpdir, "control.yml")).touch()
            Path(os.path.join(tmpdir, "manifest.json")).touch()
            Path(os.path.join(tmpdir, "notes.txt")).touch()

            files = ConfigLoader.find_config_files(tmpdir)
            self.assertEqual([f.name for f in files], ["control.yml", "sweep.yaml"])

    def test_find_config_files_not_directory(self):
        """Test error when path is not a directory"""
        with tempfile.NamedTemporaryFile() as f:
            with self.assertRaises(NotADirectoryError):
                ConfigLoader.find_config_files(f.name)


if __name__ == '__main__':
    unittest.main()
