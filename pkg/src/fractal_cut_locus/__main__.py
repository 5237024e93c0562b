import sys

from fractal_cut_locus.cli import main

sys.exit(main())
