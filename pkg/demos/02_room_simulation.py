"""Random shoebox scenes: geometry, image-source RIRs, rendered mixtures.

Scenes follow a fixed recipe: two sources and four 4-mic nodes placed
with 0.5 m clearances, image-source RIRs with fractional delays, and a
mixture SNR pinned at node 1's first microphone.
"""

import numpy as np

from asyncse.rooms import render_scene, sample_scene, simulate_rir, synthetic_interferer, synthetic_speech

room, placement = sample_scene(seed=42)
print(
    f"room: {room.length:.2f} x {room.width:.2f} x {room.height:.2f} m, "
    f"absorption {room.absorption:.2f}"
)
print(f"target at {np.round(placement.target_pos, 2)}, noise at {np.round(placement.noise_pos, 2)}")
for k, c in enumerate(placement.node_centers):
    print(f"  node {k} centred at {np.round(c, 2)}")

# one RIR up close: direct path plus early reflections
rir = simulate_rir(room, placement.target_pos, placement.mic_positions[0, 0], max_order=4)
peak = np.argmax(np.abs(rir.samples))
dist = np.linalg.norm(placement.target_pos - placement.mic_positions[0, 0])
print(f"RIR: {len(rir)} samples, first peak near {peak} (direct path {dist / 343 * 16000:.1f})")

scene = render_scene(
    placement,
    room,
    synthetic_speech(4.0, seed=1),
    synthetic_interferer(4.0, seed=2),
    snr_db=3.0,
)
e_s = np.sum(scene.target_images[0, 0] ** 2)
e_n = np.sum(scene.noise_images[0, 0] ** 2)
print(f"reference-mic SNR: {10 * np.log10(e_s / e_n):.2f} dB (requested 3.00)")
print(f"mixtures shape (nodes, mics, samples): {scene.mixtures.shape}")
