import jax

jax.config.update('jax_enable_x64', True)

import phdyn.errors  # noqa: E402
import phdyn.torus  # noqa: E402
import phdyn.systems  # noqa: E402
import phdyn.splitting  # noqa: E402
import phdyn.measures  # noqa: E402
import phdyn.ergodic  # noqa: E402
import phdyn.basins  # noqa: E402
import phdyn.config  # noqa: E402
import phdyn.io  # noqa: E402
import phdyn.experiments  # noqa: E402
import phdyn.recipes  # noqa: E402
