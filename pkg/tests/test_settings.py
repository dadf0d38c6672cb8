import os
import unittest
from unittest.mock import patch

from hardylab.settings import DEFAULT_DT, DEFAULT_GRID, DEFAULT_SEED, Settings


class TestSettings(unittest.TestCase):

    @patch.dict(os.environ, {}, clear=True)
    def test_defaults(self):
        """Test Settings falls back to built-in defaults."""
        settings = Settings(dotenv=False)
        self.assertEqual(settings.seed, DEFAULT_SEED)
        self.assertEqual(settings.grid, DEFAULT_GRID)
        self.assertEqual(settings.dt, DEFAULT_DT)
        self.assertEqual(settings.log_level, "WARNING")
        self.assertGreaterEqual(settings.threads, 1)

    @patch.dict(os.environ, {"HARDYLAB_SEED": "42", "HARDYLAB_GRID": "32", "HARDYLAB_DT": "0.001",
                             "HARDYLAB_THREADS": "3", "HARDYLAB_LOG_LEVEL": "info"}, clear=True)
    def test_environment_overrides(self):
        """Test Settings reads HARDYLAB_* variables."""
        settings = Settings(dotenv=False)
        self.assertEqual(settings.seed, 42)
        self.assertEqual(settings.grid, 32)
        self.assertEqual(settings.dt, 0.001)
        self.assertEqual(settings.threads, 3)
        self.assertEqual(settings.log_level, "INFO")

    @patch.dict(os.environ, {"HARDYLAB_SEED": "seven"}, clear=True)
    def test_invalid_integer(self):
        """Test a non-integer seed raises a message naming the variable."""
        with self.assertRaises(ValueError) as ctx:
            Settings(dotenv=False)
        self.assertIn("HARDYLAB_SEED", str(ctx.exception))

    @patch.dict(os.environ, {"HARDYLAB_DT": "fast"}, clear=True)
    def test_invalid_float(self):
        """Test a non-numeric dt raises a message naming the variable."""
        with self.assertRaises(ValueError) as ctx:
            Settings(dotenv=False)
        self.assertIn("HARDYLAB_DT", str(ctx.exception))

    @patch.dict(os.environ, {"HARDYLAB_SEED": ""}, clear=True)
    def test_empty_value_uses_default(self):
        """Test an empty variable counts as unset."""
        self.assertEqual(Settings(dotenv=False).seed, DEFAULT_SEED)

    @patch.dict(os.environ, {}, clear=True)
    @patch("hardylab.settings.load_dotenv")
    def test_dotenv_is_loaded(self, mock_load_dotenv):
        """Test Settings merges a .env file by default."""
        Settings()
        mock_load_dotenv.assert_called_once_with()
