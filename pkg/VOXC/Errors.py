# Exception types raised across the package
# Commands.py maps Input_Error -> exit code 2 and Numerical_Error -> exit code 3


class VOXC_Error(Exception):
  pass


# Precondition or file-format violation (bad input from the caller)
class Input_Error(VOXC_Error, ValueError):
  pass


# Rendered view contains no object pixels
class Not_Visible_Error(Input_Error):
  def __init__(self, message: str = "object not visible"):
    super().__init__(message)


# Numerical failure during optimization (overflow, divergence, degenerate fits)
class Numerical_Error(VOXC_Error, ArithmeticError):
  pass
