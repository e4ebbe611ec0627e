"""
Base Agent Class - Foundation for the per-frame pipeline stages
"""
from typing import Any, Dict, List


class BaseAgent:
    """
    Base class for all stages of the per-frame pipeline.
    Each agent has a specific role and set of skills.
    """

    def __init__(self, name: str, role: str, skills: List[Any]):
        """
        Initialize the base agent

        Args:
            name: Stage name used in logs and failure records
            role: Agent's role/purpose
            skills: List of skill objects this agent possesses
        """
        self.name = name
        self.role = role
        self.skills = skills

    def describe(self) -> str:
        skills_description = ", ".join(
            skill.__class__.__name__.replace("Skill", "") for skill in self.skills)
        return f"{self.name}: {self.role} [{skills_description}]"

    def execute(self, state: Dict[str, Any]) -> Dict[str, Any]:
        """
        Process one frame.
        This should be overridden by subclasses.

        Args:
            state: Per-frame state

        Returns:
            Keys to merge into the state
        """
        raise NotImplementedError("Subclasses must implement execute method")

    def __repr__(self) -> str:
        return f"{self.name} ({self.role})"
