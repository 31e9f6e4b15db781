name = "pmbench"
