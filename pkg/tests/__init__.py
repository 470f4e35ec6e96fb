# Tests for call-purpose-detector package
