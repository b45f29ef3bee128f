"""Session-aware N-best ASR hypothesis rescoring.

Combines first-pass ASR scores with language-model scores
(``asr + alpha * lm + gamma * length``) and carries the selected
hypotheses' tokens across utterance boundaries as LM context, plus the
evaluation stack (WER, oracle WER, perplexity with context, matched-pairs
significance, alpha/gamma grid search) around it.
"""

__version__ = "0.1.0"
