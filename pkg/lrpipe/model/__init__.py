from .layers import *
from .functional import *
from .io import *
