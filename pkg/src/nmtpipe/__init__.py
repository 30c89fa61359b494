"""Desk-scale neural machine translation pipeline toolkit.

Preprocessing with case factors and compound splitting, joint BPE subwords,
cross-entropy-difference data selection, a bidirectional LSTM encoder-decoder
with general attention trained by SGD with plateau-triggered decay,
back-translation, one-epoch hyper-specialisation, and multi-bleu-compatible
evaluation.
"""

__version__ = "0.1.0"

from .bleu import BleuReport, average_bleu, bleu
from .errors import CheckpointError, ConfigError, DataError, NmtError, NumericError
from .estimator import LstmTranslator
from .lm import NGramLanguageModel, sample_corpus, train_lm
from .model import ModelConfig, Seq2SeqModel
from .select import MooreLewisSelector, SelectionJob, score_and_sort, select_top
from .subword import BpeEncoder, Vocabulary, apply_bpe, build_vocab, learn_bpe, revert_bpe
from .textnorm import (
    CompoundSplitter,
    case_factor,
    decode_case,
    encode_case,
    join_compounds,
    split_compound,
    tokenize,
)
from .train import (
    TrainingSchedule,
    TrainState,
    build_schedule,
    evaluate_ppl,
    load_checkpoint,
    run_epoch,
    run_schedule,
    save_checkpoint,
    sgd_update,
    update_lr,
)
from .translate import (
    Hypothesis,
    SyntheticCorpus,
    back_translate,
    beam_decode,
    greedy_decode,
    hyper_specialize,
)

__all__ = [
    "BleuReport", "average_bleu", "bleu",
    "CheckpointError", "ConfigError", "DataError", "NmtError", "NumericError",
    "LstmTranslator",
    "NGramLanguageModel", "sample_corpus", "train_lm",
    "ModelConfig", "Seq2SeqModel",
    "MooreLewisSelector", "SelectionJob", "score_and_sort", "select_top",
    "BpeEncoder", "Vocabulary", "apply_bpe", "build_vocab", "learn_bpe", "revert_bpe",
    "CompoundSplitter", "case_factor", "decode_case", "encode_case",
    "join_compounds", "split_compound", "tokenize",
    "TrainingSchedule", "TrainState", "build_schedule", "evaluate_ppl",
    "load_checkpoint", "run_epoch", "run_schedule", "save_checkpoint",
    "sgd_update", "update_lr",
    "Hypothesis", "SyntheticCorpus", "back_translate", "beam_decode",
    "greedy_decode", "hyper_specialize",
]
