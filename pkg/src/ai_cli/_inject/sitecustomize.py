# Preload glue.  Putting this directory on PYTHONPATH makes every new
# interpreter run the shim's load-time entry before the host program's own
# code, in the same spirit as the platform loader's preload variable.
# Any failure must leave the host untouched.
try:
    import ai_cli.attach
    ai_cli.attach.on_load()
except Exception:
    pass
