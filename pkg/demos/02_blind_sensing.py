"""Blind sensing at 5 dB SNR: simulate 1e5 snapshots, let the regularised
decomposition decide how many sources are present, then report carriers,
angles and how much of each recovered spectrum lands in the true band.
"""
import numpy as np
from scipy.integrate import trapezoid

from passat import PipelineOptions, estimate_scenario
from passat.presets import three_source_scenario

scenario = three_source_scenario(snr_db=5.0, seed=42)
report, _ = estimate_scenario(scenario, PipelineOptions(), seed=42)
d = report.diagnostics
print(f"detected K = {d['k_detected']}, lags L = {d['max_lag']}, "
      f"noise power {d['sigma2_hat']:.3f} (true {scenario.sigma2:.3f})\n")

print(f"{'est f (MHz)':>12} {'err (MHz)':>10} {'est theta':>10} {'err (rad)':>10} {'in band':>8}")
for est in sorted(report.good(), key=lambda s: s.f_hat):
    src = min(scenario.sources, key=lambda s: abs(s.carrier_freq_hz - est.f_hat))
    f, p = est.spectrum.freq_hz, est.spectrum.power
    band = np.abs(f - src.carrier_freq_hz) <= src.bandwidth_hz / 2
    frac = trapezoid(np.where(band, p, 0), f) / trapezoid(p, f)
    print(f"{est.f_hat / 1e6:12.3f} {(est.f_hat - src.carrier_freq_hz) / 1e6:10.3f} "
          f"{est.theta_hat:10.4f} {est.theta_hat - src.doa_rad:10.4f} {frac:8.3f}")
print("\nCarrier errors of a few MHz are expected here: the Cramer-Rao bound for this "
      "setup is about 0.6 MHz per source.")
