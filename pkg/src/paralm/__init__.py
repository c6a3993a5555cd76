"""Zero-shot paraphrase generation with a multilingual decoder-only LM.

Train one language model on concatenated translation pairs, then decode
with the output language identifier set equal to the input language to
paraphrase in a single step. Ships its own float64 autodiff core, a
round-trip-pivot baseline, and an automatic evaluation suite, all runnable
on a laptop CPU against synthetic languages with an exact semantic oracle.
"""

__version__ = "0.1.0"
