import sys

from coalition_scope.cli import main

sys.exit(main())
