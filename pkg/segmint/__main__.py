import sys

from segmint.main import main

sys.exit(main())
