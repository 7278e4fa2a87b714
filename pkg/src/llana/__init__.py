"""LLM-assisted Bayesian optimization of analog placement net weightings.

Subpackages map onto the pieces of the pipeline:

``space``        parameter spaces, configurations, trajectories, dataset files
``gp``           exact Gaussian-process surrogate
``forest``       random-forest surrogate
``llm``          chat-completion backends (HTTP and offline mock)
``icl``          prompt rendering/parsing and the in-context-learning operations
``acquisition``  expected improvement and the sampler's target score
``optimizer``    LLM-driven BO, classical BO and multi-objective BO loops
``analog``       synthetic netlist, quadratic placer and proxy metrics
``metrics``      NRMSE, R^2, LPD and normalized regret
``bench``        surrogate-vs-observations benchmark harness
"""

__version__ = "0.1.0"
