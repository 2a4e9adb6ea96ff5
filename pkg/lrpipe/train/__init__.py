from .base import *
from .checkpoint import *
from .fit import *
from .logging import *
from .optim import *
from .policy import *
from .prehab import *
from .rehab import *
