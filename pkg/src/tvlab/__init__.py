"""Desk-scale tweet sentiment laboratory.

Pipeline stages: corpus ingestion, five-step normalization, subword
tokenization with emoticon vocabulary augmentation, MLM / ELECTRA-style
pretraining, [CLS]-head fine-tuning, evaluation, and PCA + t-SNE error
analysis with scatter rendering.
"""

__version__ = "0.1.0"
