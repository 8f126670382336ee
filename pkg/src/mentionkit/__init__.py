"""Toolkit for finding informal dataset mentions in scholarly full text.

The pipeline: ingest full-text publications, flag candidate sentences with
rule-based patterns, collect human span annotations in three modes
(manual / correct / teach), train a span labeler on the accumulated
decisions, and feed model proposals and learned patterns back into the
next annotation round.
"""

__version__ = "0.1.0"
