# File formats and persistence
