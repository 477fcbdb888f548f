"""The decentralized counting protocol, end to end.

A chain of smart cameras watches a parking strip with overlapping views.
Each node counts locally and exchanges masks with its neighbors so the
sink can subtract duplicates. We compare three ways of producing the
global number: naive summation, overlap masking, and the mesh protocol,
first on a clean scene and then under realistic detector noise.

Run: python demos/02_mesh_counting_protocol.py
"""

from meshcount import ProtocolConfig, SyntheticSceneSpec, generate_scene, run_scenario

# ---------------------------------------------------------------------------
# A clean world: three cameras, half-window overlaps, no detector noise.
# The protocol should be exact here, frame after frame.
# ---------------------------------------------------------------------------
clean = SyntheticSceneSpec(
    n_cameras=3,
    n_vehicles=40,
    overlap=0.5,
    warp="projective",
    n_frames=3,
    seed=42,
)
scenario = generate_scene(clean)
report = run_scenario(scenario, ProtocolConfig(tau=0.2, aggregation="mean"))

print("noise-free scene")
print("frame        gt  naive  masking  ours")
for row in report.frames:
    print(f"{row['frame_id']}  {row['gt']:4d}  {row['naive']:5d}  "
          f"{row['masking']:7d}  {row['ours_raw']:5.1f}")

# Per-pair diagnostics show the duplicate estimates flowing to the sink.
diag = report.diagnostics[0]
for pair in diag["pairs"]:
    print(f"pair {pair['pair']}: mu_ij={pair['mu_ij']} mu_ji={pair['mu_ji']} "
          f"aggregated={pair['aggregated']}")

# ---------------------------------------------------------------------------
# The same geometry with a detector that misses distant cars, jitters its
# boxes, and occasionally double-fires. Naive overcounts by roughly the
# number of shared vehicles; masking loses the cars its owner cannot see;
# the protocol stays close to the truth because either camera suffices.
# ---------------------------------------------------------------------------
noisy = SyntheticSceneSpec(
    n_cameras=3,
    n_vehicles=60,
    overlap=0.5,
    warp="translation",
    drop_rate=0.05,
    jitter_px=2.0,
    spurious_rate=0.05,
    n_frames=6,
    seed=7,
)
report = run_scenario(generate_scene(noisy), ProtocolConfig())

print("\nnoisy scene, six frames")
print("frame        gt  naive  masking  ours   err_n  err_m  err_o")
for row in report.frames:
    print(f"{row['frame_id']}  {row['gt']:4d}  {row['naive']:5d}  "
          f"{row['masking']:7d}  {row['ours_raw']:5.1f}  "
          f"{row['err_n']:+6.1f} {row['err_m']:+6.1f} {row['err_o']:+6.1f}")

print("\nsummary over frames (error / |error| / squared / relative %)")
for method in ("naive", "masking", "ours"):
    s = report.summary[method]
    print(f"{method:8s} {s['error']:+7.2f}  {s['absolute_error']:6.2f}  "
          f"{s['squared_error']:8.2f}  {s['relative_error_pct']:5.2f}")
