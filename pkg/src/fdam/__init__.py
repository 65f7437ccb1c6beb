"""Frequency-dynamic attention modulation: attention as low-pass filters, their
high-pass inversion, band-wise feature scaling, and spectral diagnostics."""

__version__ = "0.1.0"
