# Tests for FracFTS
