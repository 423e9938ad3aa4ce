"""
The Fourier oracle on a one-dimensional mixture
===============================================

Two unit-variance Gaussians sit at -2 and +2. The oracle turns their
samples into an estimate of the same mixture with every component
narrowed to width ``delta_bar``. Peaks of that estimate mark the centers.
"""
import numpy as np

from fourier_mixture import MixtureParams, draw_frequencies, exact_smoothed, make_kernel, oracle_values, sample_mixture

params = MixtureParams(1, [[-2.0], [2.0]], [0.5, 0.5])
samples = sample_mixture(params, 20_000, seed=0)

# narrower delta_bar sharpens peaks but inflates the Monte-Carlo noise
for delta_bar in (1.0, 0.7):
    kernel = make_kernel(1, delta_bar, k=2, C3_5=1.0)
    draw = draw_frequencies(kernel, samples, m=4000, seed=1)
    xs = np.linspace(-5, 5, 21)[:, None]
    est = oracle_values(draw, xs)
    exact = exact_smoothed(params, delta_bar, xs)
    print(f"delta_bar = {delta_bar}  (kernel radius {kernel.radius:.2f}, peak height {kernel.gamma0:.3f})")
    print("     x   estimate     exact")
    for x, e, t in zip(xs[:, 0], est, exact):
        print(f"{x:6.1f} {e:10.4f} {t:9.4f}")
    print(f"max error {np.max(np.abs(est - exact)) / kernel.gamma0:.1%} of the peak\n")
