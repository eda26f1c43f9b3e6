from .app import ServingBundle, create_app, load_bundle

__all__ = ["ServingBundle", "create_app", "load_bundle"]
