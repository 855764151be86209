__codename__ = "FILMLAB"
__tagline__ = "Stochastic Thin Films, Checked Identity by Identity"
__version__ = "1.0.0"

BANNER = r"""
  ███████╗██╗██╗     ███╗   ███╗██╗      █████╗ ██████╗
  ██╔════╝██║██║     ████╗ ████║██║     ██╔══██╗██╔══██╗
  █████╗  ██║██║     ██╔████╔██║██║     ███████║██████╔╝
  ██╔══╝  ██║██║     ██║╚██╔╝██║██║     ██╔══██║██╔══██╗
  ██║     ██║███████╗██║ ╚═╝ ██║███████╗██║  ██║██████╔╝
  ╚═╝     ╚═╝╚══════╝╚═╝     ╚═╝╚══════╝╚═╝  ╚═╝╚═════╝
"""
