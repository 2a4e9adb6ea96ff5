from .config import *
from .data import *
from .experiment import *
from .report import *
