"""Sequence classifiers over fused descriptor series."""
from .forest import ForestModel, forest_predict, train_forest
from .lstm import (LstmConfig, LstmModel, SequenceSample, lstm_backward, lstm_forward,
                   train_lstm)

__all__ = ["ForestModel", "forest_predict", "train_forest", "LstmConfig", "LstmModel",
           "SequenceSample", "lstm_backward", "lstm_forward", "train_lstm"]
