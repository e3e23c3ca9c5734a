"""Physical constants shared by the field and limit-process modules."""

import math

import numpy as np

#: variance growth rate of the field, G_N(x,x) ~ g log N
G = 2.0 / math.pi
SQRT_G = math.sqrt(G)

#: critical inverse temperature, 2 / sqrt(g)
BETA_C = math.sqrt(2.0 * math.pi)

EULER_GAMMA = float(np.euler_gamma)

#: additive constant of the potential kernel asymptotics
KERNEL_CONSTANT = (2.0 * EULER_GAMMA + math.log(8.0)) / math.pi
