from __future__ import annotations

import random

import pytest

from mentionkit.corpus import Sentence
from mentionkit.matcher import compile_rules

# The worked-example sentence, including its leading typographic quote; the
# mention "American National Election Survey (ANES)" sits at offsets
# (87, 127).
ANES_TEXT = (
    "“We also investigate individual-level black-white thermometer scores "
    "from waves of the American National Election Survey (ANES) "
    "from 1984 until 1998"
)
ANES_SPAN = (87, 127)


@pytest.fixture(scope="session")
def rules():
    return compile_rules()


@pytest.fixture
def anes_sentence() -> Sentence:
    return Sentence(doc_id="fixture", sent_index=0, text=ANES_TEXT, start=0, end=len(ANES_TEXT))


def make_sentence(text: str, doc_id: str = "t", sent_index: int = 0) -> Sentence:
    return Sentence(doc_id=doc_id, sent_index=sent_index, text=text, start=0, end=len(text))


# Vocabulary for randomized matcher-equivalence sentences: keyword variants,
# acronyms, title-case words, lowercase filler, punctuation, numbers, and a
# few non-ASCII words.
_KEYWORDISH = (
    "data", "Data", "DATA", "dataset", "datasets", "data set", "data  base",
    "databases", "corpus", "corpora", "Corpus", "treebank", "tree bank",
    "collection", "collections", "benchmark", "benchmarks", "survey",
    "surveys", "Survey", "sample", "samples", "study", "studies", "Study",
    "report", "reports", "census", "censuses", "training set", "test set",
    "trainings set", "validation  set", "testing set", "metadata",
    "database", "studying", "reported", "sampled", "census-based",
)
_ACRONYMS = ("ANES", "GSS", "PSID", "GDP", "NATO", "RCTs", "ABS", "AB", "NHANESs", "USA")
_TITLE = ("American", "National", "Election", "Panel", "Income", "Dynamics",
          "General", "Social", "World", "Values", "New", "York")
_LOWER = ("the", "we", "use", "from", "waves", "of", "in", "and", "with",
          "scores", "between", "results", "donnée", "café", "über")
_PUNCT = ("(", ")", ",", ".", "-", ";", ":", "'", '"')
_NUMS = ("1984", "2020", "3", "42")
_WS = (" ", " ", " ", "  ", "\t", "\n")


def random_sentence(rng: random.Random) -> str:
    parts: list[str] = []
    for _ in range(rng.randint(3, 18)):
        bucket = rng.random()
        if bucket < 0.30:
            parts.append(rng.choice(_KEYWORDISH))
        elif bucket < 0.45:
            parts.append(rng.choice(_ACRONYMS))
        elif bucket < 0.65:
            parts.append(rng.choice(_TITLE))
        elif bucket < 0.85:
            parts.append(rng.choice(_LOWER))
        elif bucket < 0.93:
            parts.append(rng.choice(_PUNCT))
        else:
            parts.append(rng.choice(_NUMS))
    out = []
    for i, part in enumerate(parts):
        if i:
            out.append(rng.choice(_WS) if rng.random() < 0.9 else "")
        out.append(part)
    return "".join(out)


HAND_FIXTURE_SENTENCES = [
    "We use data.",
    "We use Data and DATA.",
    "metadata never matches the bare keyword.",
    "The datasets and databases differ from the data set and the data  base.",
    "Corpora beat a corpus; treebank versus tree bank.",
    "Collections, benchmarks, surveys, samples, studies, reports, censuses.",
    "A census and two censuses.",
    "training set, trainings set, testing set, validation  set, test set",
    "The training  set spans lines.",
    "ANES and GSS and PSID and GDP.",
    "RCTs are plural acronyms; ABs is too short; AB too.",
    "NHANESs ends with s after caps.",
    "(ANES) in parentheses, ANES, and ANES.",
    "American National Election Survey (ANES) from 1984.",
    "Panel Study of Income Dynamics (PSID) has lowercase of.",
    "General Social Survey data.",
    "New York City Hall is three title words.",
    "McDonald House Charity starts with McDonald.",
    "USA Today Poll covers Usa Today too.",
    "study Studies STUDIES studying studied.",
    "The Survey\nspans a newline Survey Bank One.",
    "corpus-based methods use corpora.",
    "a survey, a Survey; surveys!",
    "sample(s) and samples' ends.",
    "data base s is split oddly.",
    "datasets— with a dash after.",
    "We studied the World Values Survey (WVS) waves.",
    "Tab\tseparated\tdata\tset\ttokens.",
    "données and café and über.",
    "ALLCAPS SENTENCE WITH DATA AND GDP HERE.",
]


def hand_fixture() -> list[str]:
    """~200 deterministic tricky sentences for matcher equivalence."""
    rng = random.Random(424242)
    sentences = list(HAND_FIXTURE_SENTENCES)
    while len(sentences) < 200:
        sentences.append(random_sentence(rng))
    return sentences
