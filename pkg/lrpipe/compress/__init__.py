from .methods import *
from .plan import *
