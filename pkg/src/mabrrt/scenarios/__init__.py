"""Bundled 2D benchmark scenarios (``scenario_A`` ... ``scenario_E``)."""
