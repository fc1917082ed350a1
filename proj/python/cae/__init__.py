"""Cycle-consistent adversarial autoencoders for unsupervised text style transfer.

Everything is re-exported from the compiled extension module: vocabulary and
corpus handling, training, checkpointing, style transfer, and the evaluation
judges (transfer rate, BLEU, perplexity, reverse perplexity).
"""

try:
    # Installed wheel layout: the extension lives inside the package.
    from cae._cae import *  # noqa: F401,F403
    from cae._cae import __version__  # noqa: F401
except ImportError:
    # Build-tree layout: the extension sits on sys.path next to the package.
    from _cae import *  # noqa: F401,F403
    from _cae import __version__  # noqa: F401
