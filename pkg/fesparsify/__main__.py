import sys

from fesparsify.cli import main


sys.exit(main())
