"""Tokenization, light Italian stemming and TF-IDF features."""
from dataclasses import dataclass, field
import functools
import re
import typing as tp

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import TfidfVectorizer

from ..errors import FeatureError, ValidationError
from ..ingest import DATA_ROOT, read_list_file

STEMMERS = ("italian_light", "none")
VOWELS = "aeiouàèéìòù"

_WORD_RE = re.compile(r"[^\W_]+")


@functools.lru_cache(maxsize=None)
def default_stopwords() -> tp.Tuple[str, ...]:
    return tuple(sorted(set(read_list_file(DATA_ROOT / 'stopwords_it.txt'))))


@dataclass(frozen=True)
class TokenPipelineConfig:
    lowercase: bool = True
    stemmer: str = "italian_light"
    min_token_length: int = 1
    # kept sorted so pickled models are byte-stable
    stopwords: tp.Tuple[str, ...] = field(default_factory=default_stopwords)
    ngram_max: int = 1

    def __post_init__(self):
        if self.min_token_length < 1:
            raise ValidationError(f"min_token_length must be >= 1, got {self.min_token_length}")
        if self.stemmer not in STEMMERS:
            raise ValidationError(f"unknown stemmer {self.stemmer!r}, expected one of {STEMMERS}")
        if self.ngram_max < 1:
            raise ValidationError(f"ngram_max must be >= 1, got {self.ngram_max}")
        object.__setattr__(self, "stopwords", tuple(sorted(set(self.stopwords))))


def light_stem(token: str) -> str:
    """Strip one plural/gender ending: 'clandestini' -> 'clandestin', 'sbarchi' -> 'sbarc'."""
    if len(token) <= 3:
        return token
    if len(token) > 4 and token.endswith(("chi", "che", "ghi", "ghe")):
        return token[:-2]
    if token[-1] in VOWELS:
        return token[:-1]
    return token


def tokenize_stem(text: str, cfg: tp.Optional[TokenPipelineConfig] = None) -> tp.List[str]:
    cfg = cfg or TokenPipelineConfig()
    return StemTokenizer(cfg)(text)


class StemTokenizer:
    """Picklable tokenizer handed to the vectorizer."""

    def __init__(self, cfg: TokenPipelineConfig):
        self.cfg = cfg
        self._stopwords = frozenset(cfg.stopwords)

    def __call__(self, text: str) -> tp.List[str]:
        if self.cfg.lowercase:
            text = text.lower()
        stems = []
        for token in _WORD_RE.findall(text):
            if token.lower() in self._stopwords or len(token) < self.cfg.min_token_length:
                continue
            stems.append(light_stem(token) if self.cfg.stemmer == "italian_light" else token)
        return stems

    def __getstate__(self):
        return {"cfg": self.cfg}

    def __setstate__(self, state):
        self.__init__(state["cfg"])


class TfidfModel:
    """Fitted vocabulary and idf weights, idf = ln((1 + N) / (1 + df)) + 1."""

    def __init__(self, vectorizer: TfidfVectorizer):
        self.vectorizer = vectorizer

    @property
    def vocabulary(self) -> tp.Dict[str, int]:
        return dict(self.vectorizer.vocabulary_)

    @property
    def idf(self) -> np.ndarray:
        return self.vectorizer.idf_

    @property
    def l2_normalize(self) -> bool:
        return self.vectorizer.norm == "l2"

    @property
    def feature_names(self) -> tp.List[str]:
        return list(self.vectorizer.get_feature_names_out())


def fit_tfidf(corpus: tp.Sequence[str], cfg: tp.Optional[TokenPipelineConfig] = None,
              l2_normalize: bool = True) -> TfidfModel:
    if len(corpus) == 0:
        raise FeatureError("cannot fit TF-IDF on an empty corpus")
    cfg = cfg or TokenPipelineConfig()
    vectorizer = TfidfVectorizer(
        tokenizer=StemTokenizer(cfg), token_pattern=None, lowercase=False,
        ngram_range=(1, cfg.ngram_max), norm="l2" if l2_normalize else None,
        smooth_idf=True, sublinear_tf=False, dtype=np.float64)
    try:
        vectorizer.fit(list(corpus))
    except ValueError as error:
        raise FeatureError(f"empty vocabulary: {error}")
    return TfidfModel(vectorizer)


def transform(texts: tp.Sequence[str], model: TfidfModel) -> sparse.csr_matrix:
    return model.vectorizer.transform(list(texts)).tocsr()
