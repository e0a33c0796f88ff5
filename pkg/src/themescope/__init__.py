"""Thematic analysis of corporate social-media corpora.

Two stages: (1) SDG labeling of post text via an ensemble of chat-completion
backends with majority voting, evaluated against hashtag proxy truth; and
(2) discovery of statistically distinctive visual theme clusters over
precomputed image embeddings, with risk/engagement deviation statistics.
"""

__version__ = "0.1.0"
