"""
Semantic Gaze Classification for Egocentric Eye-Tracking Sessions
Main execution script

Pipeline:
- Gaze dot localization or logged gaze, then a gaze-centred crop
- Point-prompted object mask (region growing or external masks)
- Zero-shot, few-shot cache adapter or linear-probe classification, fused over inputs
- LangGraph per-frame workflow with bounded, ordered streaming
- Attention analytics, metrics, throughput benchmarks and reports

Run `python main.py --help` for the subcommands.
"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
