from captionforge.metrics.bleu import bleu_corpus, bleu_sentence, bleu_sentence_all
from captionforge.metrics.cider import IdfTable, build_idf, cider, cider_d
from captionforge.metrics.meteor import meteor_lite, stem
from captionforge.metrics.ngrams import NGramMultiset, extract_ngrams
from captionforge.metrics.report import METRIC_KEYS, MetricReport, score_corpus, score_sentence
from captionforge.metrics.rouge import lcs_length, rouge_l

__all__ = [
    "IdfTable",
    "METRIC_KEYS",
    "MetricReport",
    "NGramMultiset",
    "bleu_corpus",
    "bleu_sentence",
    "bleu_sentence_all",
    "build_idf",
    "cider",
    "cider_d",
    "extract_ngrams",
    "lcs_length",
    "meteor_lite",
    "rouge_l",
    "score_corpus",
    "score_sentence",
    "stem",
]
