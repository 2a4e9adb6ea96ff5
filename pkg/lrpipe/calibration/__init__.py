from .statistics import *
from .io import *
