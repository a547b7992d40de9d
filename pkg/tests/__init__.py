# Tests for wick-utils
