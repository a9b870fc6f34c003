"""Grounded task planning with a completion LM and an embedding-based action translator."""
from groundplan.dsl import ActionStep, Program, parse_program, parse_step, render_program, render_step
from groundplan.embedding import HashingProvider, cosine_similarity
from groundplan.environment import execute_program, executability, load_fixture_scene
from groundplan.kernels import BACKEND as KERNEL_BACKEND
from groundplan.lm import CorpusBackend, SamplingParams, ScriptedBackend
from groundplan.planner import Planner, PlannerConfig, QueryTask, select_example
from groundplan.translator import TranslatorConfig, build_bank, enumerate_action_bank, translate

__version__ = "0.1.0"

__all__ = [
    "ActionStep", "CorpusBackend", "HashingProvider", "KERNEL_BACKEND", "Planner",
    "PlannerConfig", "Program", "QueryTask", "SamplingParams", "ScriptedBackend",
    "TranslatorConfig", "build_bank", "cosine_similarity", "enumerate_action_bank",
    "executability", "execute_program", "load_fixture_scene", "parse_program", "parse_step",
    "render_program", "render_step", "select_example", "translate",
]
