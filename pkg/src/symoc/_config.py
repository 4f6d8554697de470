"""JAX runtime configuration.

Import this module before any jax.numpy use.  The solver needs float64
throughout: symplecticity defects are asserted at 1e-10 and boundary
residuals at 1e-8, both unreachable in float32.
"""

import jax

jax.config.update("jax_enable_x64", True)
