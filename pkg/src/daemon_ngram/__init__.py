"""Multi-stage byte N-gram feature mining for explainable file-family classification."""

from .bundle import ModelBundle
from .corpus import Corpus, Sample, Split, load_corpus, stratified_split
from .entropy import EntropyThresholds, Stage1Config, compute_thresholds, entropy_of
from .explain import ExplainReport, explain
from .featurizer import FeatureVector, PatternSet, build_automaton, featurize
from .forest import (Calibrator, ForestConfig, RandomForest, TrainedForest, fit_calibrator,
                     prune_and_retrain, train_initial)
from .metrics import PredictionMatrix, classification_report, logloss
from .miner import (FamilyRepresentatives, Stage2Config, file_presence_grams, mine_family,
                    one_gram_histogram)
from .pipeline import DaemonClassifier, NGramFeatureMiner
from .selector import (PairSplit, Stage3Config, TaggedFeature, info_gain, pair_entropy,
                       select_pairwise)
from .synthgen import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "Calibrator", "Corpus", "DaemonClassifier", "EntropyThresholds", "ExplainReport",
    "FamilyRepresentatives", "FeatureVector", "ForestConfig", "ModelBundle", "NGramFeatureMiner",
    "PairSplit", "PatternSet", "PredictionMatrix", "RandomForest", "Sample", "Split",
    "Stage1Config", "Stage2Config", "Stage3Config", "SynthSpec", "TaggedFeature",
    "TrainedForest", "build_automaton", "classification_report", "compute_thresholds",
    "entropy_of", "explain", "featurize", "file_presence_grams", "fit_calibrator", "generate",
    "info_gain", "load_corpus", "logloss", "mine_family", "one_gram_histogram", "pair_entropy",
    "prune_and_retrain", "select_pairwise", "stratified_split", "train_initial",
]
