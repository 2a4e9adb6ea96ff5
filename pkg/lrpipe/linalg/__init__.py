from .svd import *
from .cholesky import *
from .sketch import *
