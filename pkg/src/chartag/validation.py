"""Input validation helpers for the estimator API."""

from __future__ import annotations


def check_token_sequences(X, name="X"):
    """Require a list of sentences, each a nonempty sequence of strings."""
    if isinstance(X, str) or not hasattr(X, "__iter__"):
        raise ValueError(f"{name} must be a list of token sequences")
    X = list(X)
    if not X:
        raise ValueError(f"{name} is empty")
    for i, sent in enumerate(X):
        if isinstance(sent, str) or not hasattr(sent, "__iter__"):
            raise ValueError(f"{name}[{i}] is not a token sequence")
        sent = list(sent)
        if not sent:
            raise ValueError(f"{name}[{i}] is an empty sentence")
        for tok in sent:
            if not isinstance(tok, str):
                raise ValueError(f"{name}[{i}] contains a non-string token: {tok!r}")
    return [list(s) for s in X]


def check_aligned_tags(X, y):
    """Require y to mirror X: same sentence count and lengths."""
    y = check_token_sequences(y, name="y")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} sentences but y has {len(y)}")
    for i, (xs, ys) in enumerate(zip(X, y)):
        if len(xs) != len(ys):
            raise ValueError(
                f"sentence {i}: {len(xs)} tokens but {len(ys)} tags")
    return y
