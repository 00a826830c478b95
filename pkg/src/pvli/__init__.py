"""Weak-supervision tooling for preconditioned visual-inference datasets.

Builds labeled (hypothesis text, premise image, allow/prevent) instances from
caption corpora and precondition/action statement banks via three grounding
strategies, and runs a human-verification service that distills a clean test
set from annotator votes.
"""

__version__ = "0.1.0"
