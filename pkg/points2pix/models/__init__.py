# Network definitions
