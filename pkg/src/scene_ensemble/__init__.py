"""Household activity classification from multi-channel audio.

Three numpy classifiers (2D CNN on spectrogram images, 1D CNN and LSTM on
MFCC sequences) combined by weighted posterior averaging.
"""

__version__ = "0.1.0"
