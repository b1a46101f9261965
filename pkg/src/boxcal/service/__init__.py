"""HTTP service wrapping the calibration pipeline."""
