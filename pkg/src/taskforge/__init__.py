"""Interactive task learning for a simulated kitchen robot.

The package turns instructor dialog into a growing library of hierarchical
task definitions: new commands are parsed into action steps, unfamiliar steps
are resolved by asking the instructor what they mean, and completed lessons
are generalized so the task transfers to new objects.
"""

__version__ = "0.1.0"
