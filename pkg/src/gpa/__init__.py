"""Synthetic household load curves from a 1-D GAN, with privacy audits.

Modules:

* :mod:`gpa.ndtensor` reverse-mode autodiff on numpy, with second order
* :mod:`gpa.curves` ingestion, windowing, normalization, partitioning, simulator
* :mod:`gpa.gan` generator, discriminator and training scenarios
* :mod:`gpa.indicators` curve indicators and indicator-distribution distances
* :mod:`gpa.forecast` LSTM forecaster and the forecasting score
* :mod:`gpa.attacks` membership-inference attacks
* :mod:`gpa.harness` repeated experiments and reports
"""

__version__ = "0.1.0"
