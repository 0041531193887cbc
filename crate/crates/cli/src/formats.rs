pub const TEXT: &str = r##"SCENARIO FILE (TOML, unknown keys are errors)

  name = "poisson_rank1"            # identifier, names the default output dir
  description = "..."               # optional
  checks = ["convexity", "ellipticity", "rank", "theorem2",
            "ineq", "semiconcavity", "harnack", "deru"]   # run in this order
  output = "out/poisson_rank1"      # optional, relative to the config file
  expect_exit = 0                   # optional, used by `ranklab suite`

  [domain]
  center = [0.0, 0.0]
  half_width = 0.5                  # or one value per axis
  grid = 17                         # points per axis, endpoints included
  seed = 7

  [field]                           # one of:
  kind = "builtin"                  #   name = radial_r | quadratic | rank1 | convex_poly | custom
  name = "rank1"                    #   params = [...]
  params = [1.0]
  # kind = "polynomial", path = "p.txt"
  # kind = "grid", path = "u.txt"
  # kind = "solve", boundary = { name = "quadratic", params = [1.0, 1.0] },
  #   guess = { ... }, damping = 1.0, max_iter = 50, tol = 1e-10
  #   (the checks then run on the solution, two cells in from the boundary)

  [operator]
  name = "trace_laplace"            # trace_laplace | logdet | example33 |
  params = [1.0]                    # korevaar_lewis | inverse_trace_general | neg_trace

  [tolerances]                      # all optional
  tau_zero = 1e-8                   # default 1e-8 * max(1, largest Hessian eigenvalue)
  delta_gap = 1e-6                  # eigenvalue gap below which Q jets are masked
  form_tol = 1e-8                   # relative to max(1, max |form entry|)
  slack_tol = 1e-4
  eta_tol = 1e-6                    # strict condition holds when min eta > eta_tol
  theta_tol = 1e-6                  # null directions fixed when max angle <= theta_tol
  certificate_tol = 1e-7
  convexity_tol = 1e-8
  deru_tol = 1e-8
  solution_tol = 1e-6
  gap_tol = 1e-8
  semiconcavity_tol = 1e-8
  regularization = 1e-3             # s in (D2u + s I, Du, u, x) for form states

  [ladder]                          # required by ineq, semiconcavity, harnack
  ell = 1
  degrees = [4, 5, 6]
  taus = [1e-2, 1e-3, 1e-4]
  alpha = 1.0
  harnack_q = 0.5
  harnack_eps = [2.0, 4.0, 8.0]     # in grid spacings

  [sampling]                        # all optional
  convexity_points = 32
  convexity_trials = 200
  convexity_starts = 2
  convexity_iters = 100
  neighborhood = 0.05
  certificate_points = 50
  deru_points = 200
  semiconcavity_pairs = 2000

EXIT CODES

  0 all checks pass, 2 a property is violated, 3 input or precondition error.
  summary.json "first_failure" points at the first failing check.

OUTPUT FILES

  summary.json  pretty JSON, keys sorted, floats with 17 significant digits,
                non-finite values as null, no timestamps
  audit.jsonl   one object per ladder rung and grid point:
                rung, degree, tau, x, Q, dQ_norm, traceTerm, slack, num1_gap,
                num2_gap, lower_dQ, deru_residuals, form_min, self_check, masked
  rankmap.csv   header x1,...,xn,lambda1,...,lambdan,rank, then one row per
                grid point in row-major order (first axis slowest)
  meta.json     version, execution mode, start time, elapsed time

FIELD FILES

  polynomial    optional "# origin x1 ... xn" line, then one line per monomial
                "e1 ... en  coefficient" in graded-lex order
  grid          header "n h d1 ... dn", optional "# origin" line, then values
                in row-major order
"##;
