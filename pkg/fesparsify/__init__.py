__version__ = '0.1.0'


from .errors import *
from .utils import *
from .types import *
from .linalg import *
from .model import *
from .leverage import *
from .sampler import *
from .solver import *
from .generators import *
from .serializer import *
