"""Model resolution and caching"""
import json
import logging
from typing import Any, Dict

from src.exceptions import InputError, MissingField
from src.lattice_models import TransportModel, generator_for, model_from_spec, transport_catalogue
from src.markov_core import MarkovGenerator

logger = logging.getLogger(__name__)


def _key(block: dict) -> str:
    return json.dumps(block, sort_keys=True)


class ModelRegistry:
    """Singleton that resolves model blocks once per process"""

    _instance = None
    _models: Dict[str, Any] = {}
    _generators: Dict[str, MarkovGenerator] = {}

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def get_model(self, block: dict):
        """Resolved model for a block (SsepParams, ZrpRingParams, MarkovGenerator or TransportModel)"""
        if block is None:
            raise MissingField("model")
        key = _key(block)
        if key not in self._models:
            try:
                self._models[key] = model_from_spec(block)
            except KeyError as e:
                raise MissingField(f"model.{e.args[0]}") from e
            logger.debug("resolved model block %s -> %s", key, type(self._models[key]).__name__)
        return self._models[key]

    def get_generator(self, block: dict) -> MarkovGenerator:
        """Finite generator of a microscopic model block"""
        key = _key(block)
        if key not in self._generators:
            gen = generator_for(self.get_model(block))
            self._generators[key] = gen
            logger.info("generator: %d states, %d transitions, observables %s",
                        gen.n_states, gen.n_transitions, list(gen.observable_names))
        return self._generators[key]

    def get_transport(self, block: dict) -> TransportModel:
        """Transport model of a block; microscopic shorthands map to their hydrodynamic limit"""
        if block is None:
            raise MissingField("model")
        if "transport" not in block and block.get("model") in ("ssep", "ssep_ring"):
            return transport_catalogue("ssep")
        model = self.get_model(block)
        if not isinstance(model, TransportModel):
            raise InputError(f"model block {block} is not a transport model")
        return model

    def clear(self):
        self._models.clear()
        self._generators.clear()


# Singleton instance
registry = ModelRegistry()
