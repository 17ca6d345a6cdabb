"""Dynamic-tomography density reconstruction toolkit.

Modules: phantom (surrogate shell dynamics), forward_model (Abel projection,
Beer-Lambert transmission, scatter/noise corruption, baseline inversion),
wasserstein (W1 oracle, dual estimate, gradient penalty), networks
(residual 3D U-Net denoiser and convolutional critic), training (losses and
the alternating loop), refine (mass/TV post-processing), metrics, pipeline
(dataset orchestration and sweeps), plots, and the click CLI.
"""

__version__ = "0.1.0"
