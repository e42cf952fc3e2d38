"""HPPNet piano transcription: CQT front end, harmonic dilated convolutions,
frequency-grouped LSTM heads, training and evaluation on a numpy autodiff core."""

__version__ = "0.1.0"
