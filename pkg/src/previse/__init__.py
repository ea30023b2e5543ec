"""Constrained sentence generation and infilling by predict-and-revise MCMC.

A token-level action classifier predicts where a sentence should be edited
and how (replace or insert); a Metropolis-Hastings sampler over n-gram
language models then revises the sentence at that position.
"""

__version__ = "0.1.0"
