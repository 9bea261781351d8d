from .graph import (BoxGraph, Grid, PerturbationWindow, TooManyCells, bp_filter,
                    build_box_graph, build_graph_on, chain_recurrent_cells, enclose,
                    inclusion_check_prop33, omega_candidate_cells, recurrent_nodes,
                    short_cycle_nodes, strip_filter, subdivide_recurrent)
