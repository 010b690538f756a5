"""Python bindings for the llmdetect toolkit.

Labels use the numeric codes 0 (human), 0.5 (uncertain) and 1 (LLM).
"""

import json

from . import _core

__all__ = [
    "load_corpus",
    "per_class_kappa",
    "cohens_kappa",
    "learner_split",
    "feature_names",
    "extract_features",
    "train",
    "predict_labels",
    "classification_report",
    "fit_glmm",
    "run_cli",
]

load_corpus = _core.load_corpus
per_class_kappa = _core.per_class_kappa
cohens_kappa = _core.cohens_kappa
learner_split = _core.learner_split
feature_names = _core.feature_names



def extract_features(text):
    """Stylometric features of one response as a name -> value dict."""
    return dict(zip(_core.feature_names(), _core.extract_features(text)))


def train(features, labels, model="logistic", config=None):
    """Train a classifier; returns the serialized model as a dict."""
    return json.loads(_core.train(features, labels, model, json.dumps(config or {})))


def predict_labels(model, features):
    return _core.predict(json.dumps(model), features)


def classification_report(y_true, y_pred):
    return json.loads(_core.classification_report(y_true, y_pred))


def fit_glmm(records):
    """records: iterable of (learner_id, item_id, flagged, mcq_correct)."""
    return json.loads(_core.fit_glmm([tuple(r) for r in records]))


def run_cli(*args):
    """Run one CLI subcommand in-process; returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])
