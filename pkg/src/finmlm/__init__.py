"""Financial-domain MLM pretraining toolkit.

Building blocks for domain-adaptive masked language modeling:

- ``lexicon``: load and index a financial term dictionary, match phrases in
  token streams, extend a base vocabulary with one id per phrase.
- ``masking``: preferential word masking, phrase collapse, geometric span
  sampling, BERT-style corruption, and the multi-stage schedule.
- ``objectives``: the pretraining and fine-tuning losses with hand-derived
  gradients and a finite-difference checker.
- ``tinymodel``: a small generator/discriminator encoder pair for end-to-end
  toy pretraining, perplexity measurement, and contrastive fine-tuning.
- ``metrics``: classification, regression, and ranking metrics.
- ``cli``: one entry point for all workflows (``finmlm --help``).
"""

__version__ = "0.1.0"
