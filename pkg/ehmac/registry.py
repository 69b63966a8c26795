"""
Service registry for centralized service management.
"""

import logging
from typing import Any, Optional

logger = logging.getLogger(__name__)


class ServiceRegistry:
    """Centralized service registry; services are built lazily from the loaded config."""

    def __init__(self):
        self.config: Optional[Any] = None
        self.workers: int = 1
        self._mdp_service: Optional[Any] = None
        self._offline_service: Optional[Any] = None
        self._training_service: Optional[Any] = None
        self._simulation_service: Optional[Any] = None

    def initialize(self, config: Any, workers: int = 1) -> None:
        """Bind an ``EhmacConfig`` and drop services built for a previous one."""
        self.config = config
        self.workers = workers
        self._mdp_service = None
        self._offline_service = None
        self._training_service = None
        self._simulation_service = None
        logger.info("Service registry initialized")

    def get_config(self) -> Any:
        if self.config is None:
            from .utils.config_loader import load_config

            self.config = load_config()
        return self.config

    def get_mdp_service(self):
        """Get MDP service instance."""
        if not self._mdp_service:
            from .services.mdp_service import MdpService

            cfg = self.get_config()
            self._mdp_service = MdpService(cfg.params, cfg.model, cfg.discretization())
        return self._mdp_service

    def get_offline_service(self):
        """Get offline oracle service instance."""
        if not self._offline_service:
            from .services.offline_service import OfflineService

            cfg = self.get_config()
            self._offline_service = OfflineService(cfg.params, cfg.model, self.workers, cfg.experiment.ktol)
        return self._offline_service

    def get_training_service(self):
        """Get training service instance."""
        if not self._training_service:
            from .services.training_service import TrainingService

            cfg = self.get_config()
            self._training_service = TrainingService(cfg.params, cfg.training)
        return self._training_service

    def get_simulation_service(self):
        """Get simulation service instance."""
        if not self._simulation_service:
            from .services.simulation_service import SimulationService

            cfg = self.get_config()
            self._simulation_service = SimulationService(cfg.params, cfg.model, self.workers)
        return self._simulation_service


# Global service registry
services = ServiceRegistry()
