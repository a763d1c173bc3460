"""HTTP service package: models (request/response schemas) and app (FastAPI).

Import whistlerlab.service.app explicitly; re-exporting it here would make
the models module (which experiments.py needs) drag in the app and create
an import cycle.
"""
