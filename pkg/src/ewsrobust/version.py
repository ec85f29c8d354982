"""Version of the ewsrobust training framework."""

# Versioning scheme: MAJOR.MINOR
# The major version changes when checkpoint or metrics-log formats break.
# Runs recorded with different major versions are not comparable.
__version__ = '1.0'
