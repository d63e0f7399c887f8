from ccd_anticipation.bleu import bleu
from ccd_anticipation.corpus import generate_corpus, load_corpus, load_external_corpus, save_corpus
from ccd_anticipation.distill import DistillConfig, TapKind, ccd_loss, collect_taps
from ccd_anticipation.evaluate import EvalReport, evaluate_next_step
from ccd_anticipation.model import AnticipationModel, ModelConfig
from ccd_anticipation.table import Table
from ccd_anticipation.train import TrainConfig, TrainLog, train_student

__all__ = [
    'AnticipationModel',
    'DistillConfig',
    'EvalReport',
    'ModelConfig',
    'Table',
    'TapKind',
    'TrainConfig',
    'TrainLog',
    'bleu',
    'ccd_loss',
    'collect_taps',
    'evaluate_next_step',
    'generate_corpus',
    'load_corpus',
    'load_external_corpus',
    'save_corpus',
    'train_student',
]
